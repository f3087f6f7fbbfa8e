# -*- coding: utf-8 -*-
"""
Utils package: errors, stage timing, logging setup
"""
