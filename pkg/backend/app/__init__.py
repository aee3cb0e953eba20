"""Оптимизация положений меток для направленной самосборки блок-сополимеров."""
__version__ = "0.1.0"
