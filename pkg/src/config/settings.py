"""
設定管理モジュール
環境変数や設定ファイルを一元管理
"""
import os

from dotenv import load_dotenv

# カレントディレクトリの .env を優先して読み込む（既存の環境変数は上書きしない）
load_dotenv()

# ログ設定
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')


# ============================================================
# JPEG 入出力
# ============================================================

# 1ファイルあたりの最大成分数（これを超えると UnsupportedJpeg）
JPEG_MAX_COMPONENTS = int(os.getenv('TLRC_JPEG_MAX_COMPONENTS', '4'))


# ============================================================
# DCT画像 / 正規化
# ============================================================

# チャネルごとの標準偏差の下限
NORM_STD_FLOOR = float(os.getenv('TLRC_NORM_STD_FLOOR', '1e-3'))


# ============================================================
# ニューラルネット（nn_core）
# ============================================================

# Leaky ReLU の負側傾き
LEAKY_RELU_SLOPE = float(os.getenv('TLRC_LEAKY_RELU_SLOPE', '0.01'))
# GDN の beta 下限
GDN_BETA_MIN = float(os.getenv('TLRC_GDN_BETA_MIN', '1e-6'))
# GDN の gamma 初期値（対角）
GDN_GAMMA_INIT = float(os.getenv('TLRC_GDN_GAMMA_INIT', '0.1'))
# 勾配チェックの許容相対誤差
GRAD_CHECK_TOL = float(os.getenv('TLRC_GRAD_CHECK_TOL', '1e-4'))
# NaN/Inf 検出を有効にする（デバッグ用）
NN_DEBUG_FINITE = os.getenv('TLRC_NN_DEBUG_FINITE', '0') == '1'


# ============================================================
# 非可逆変換符号化（lossy_coder）
# ============================================================

# 潜在表現のチャネル数 M
LOSSY_LATENT_CHANNELS = int(os.getenv('TLRC_LATENT_CHANNELS', '192'))
# ハイパー潜在表現のチャネル数 N
LOSSY_HYPER_CHANNELS = int(os.getenv('TLRC_HYPER_CHANNELS', '128'))
# σ_y の下限
LOSSY_SCALE_FLOOR = float(os.getenv('TLRC_SCALE_FLOOR', '0.01'))
# 量子化後の潜在値の絶対値上限
LATENT_BOUND = int(os.getenv('TLRC_LATENT_BOUND', '255'))


# ============================================================
# 残差符号化（residual_coder）
# ============================================================

# 混合ロジスティック分布の成分数 K
RESIDUAL_MIXTURES = int(os.getenv('TLRC_MIXTURES', '5'))
# 特徴量チャネル数（u, CT_r）
RESIDUAL_FEATURE_CHANNELS = int(os.getenv('TLRC_FEATURE_CHANNELS', '64'))
# エントロピーパラメータ網の中間チャネル数
RESIDUAL_HIDDEN_CHANNELS = int(os.getenv('TLRC_HIDDEN_CHANNELS', '128'))
# ロジスティック分布のスケール下限
RESIDUAL_SCALE_FLOOR = float(os.getenv('TLRC_RESIDUAL_SCALE_FLOOR', '1e-2'))
# log-scale のクランプ下限
RESIDUAL_LOG_SCALE_MIN = float(os.getenv('TLRC_LOG_SCALE_MIN', '-7.0'))


# ============================================================
# エントロピー符号化（entropy_backend）
# ============================================================

# 窓の片側幅を決めるスケール倍率（μ ± TAIL_SCALES·s）
CODING_TAIL_SCALES = float(os.getenv('TLRC_CODING_TAIL_SCALES', '12.0'))
# 窓の片側幅の上限（これを超える値はエスケープで符号化）
CODING_MAX_HALF_WIDTH = int(os.getenv('TLRC_CODING_MAX_HALF_WIDTH', '128'))


# ============================================================
# 学習（trainer_pipeline）
# ============================================================

# レートと歪みの重み λ
TRAIN_LAMBDA = float(os.getenv('TLRC_LAMBDA', '0.03'))
# ミニバッチサイズ
TRAIN_BATCH_SIZE = int(os.getenv('TLRC_BATCH_SIZE', '4'))
# 学習タイルサイズ（DCTサイト数）
TRAIN_TILE_SIZE = int(os.getenv('TLRC_TILE_SIZE', '32'))
# 学習ステップ数（JOINT の既定値）
TRAIN_STEPS = int(os.getenv('TLRC_STEPS', '2000'))
# 学習率（初期 / 減衰後）
TRAIN_LR_INITIAL = float(os.getenv('TLRC_LR_INITIAL', '1e-4'))
TRAIN_LR_DECAYED = float(os.getenv('TLRC_LR_DECAYED', '1e-5'))
# 学習率を減衰させる位置（全ステップに対する割合）
TRAIN_LR_DECAY_AT = float(os.getenv('TLRC_LR_DECAY_AT', '0.9'))
# チェックポイント保存間隔（ステップ）
TRAIN_CHECKPOINT_EVERY = int(os.getenv('TLRC_CHECKPOINT_EVERY', '500'))
# ログ出力間隔（ステップ）
TRAIN_LOG_EVERY = int(os.getenv('TLRC_LOG_EVERY', '10'))
# 乱数シード
TRAIN_SEED = int(os.getenv('TLRC_SEED', '0'))
# 1画像あたりに切り出すタイル数
TRAIN_TILES_PER_IMAGE = int(os.getenv('TLRC_TILES_PER_IMAGE', '8'))


# ============================================================
# 評価 / 並列処理
# ============================================================

# 評価時の同時処理ファイル数
EVAL_WORKERS = int(os.getenv('TLRC_WORKERS', '4'))
# QPスイープの既定品質
EVAL_QPS = [int(v) for v in os.getenv('TLRC_QPS', '55,65,75,85,95').split(',')]
# 対象とする拡張子
JPEG_SUFFIXES = tuple(os.getenv('TLRC_JPEG_SUFFIXES', '.jpg,.jpeg,.JPG,.JPEG').split(','))
