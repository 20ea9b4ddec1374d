"""
Fusão multimodal com cápsulas: diferenciação automática, cápsulas,
baselines de fusão, treinamento, métricas e linha de comando.
"""

__version__ = "1.0.0"
