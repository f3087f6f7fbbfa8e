# -*- coding: utf-8 -*-
"""
Services package: corpus parsing, segmentation, embedding, graph building,
index storage, query decomposition, retrieval, evaluation and synthetic data
"""
