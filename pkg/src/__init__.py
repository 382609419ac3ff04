"""
src パッケージ
再利用可能なモジュールを提供
"""

__all__ = []

# TranscoderManager（オプショナル - torch が必要）
try:
    from src.transcoder.manager import TranscoderManager
    __all__.append('TranscoderManager')
except ImportError:
    TranscoderManager = None

# 学習・評価（オプショナル - torch と OpenCV が必要）
try:
    from src.trainer import evaluate, train
    __all__.extend(['train', 'evaluate'])
except ImportError:
    train = None
    evaluate = None
