# -*- coding: utf-8 -*-
"""
Config package for the layered component graph retrieval engine
"""

from . import hparams
from .hparams import EngineConfig, load_config

__all__ = ['hparams', 'EngineConfig', 'load_config']
