# -*- coding: utf-8 -*-
"""
Layered component graph retrieval engine
"""

__version__ = "1.0.0"
