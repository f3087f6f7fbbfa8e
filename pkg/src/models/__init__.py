# -*- coding: utf-8 -*-
"""
Domain models: corpus, layered component graph, queries and results
"""

from . import corpus, graph, query

__all__ = ['corpus', 'graph', 'query']
