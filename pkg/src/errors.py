"""トランスコーダ共通の例外"""


class TlrcError(Exception):
    """トランスコーダで発生するデータ起因の例外の基底クラス"""


# --- JPEG 入出力 ---

class UnsupportedJpeg(TlrcError):
    """対象外のJPEG（プログレッシブ、算術符号、12bit、成分数超過など）"""


class CorruptStream(TlrcError):
    """JPEGのマーカーやハフマン符号列が壊れている"""


class CategoryOverflow(TlrcError):
    """係数の大きさがハフマンテーブルで表現できるカテゴリを超えた"""


# --- 形状・範囲 ---

class OutOfRange(TlrcError, ValueError):
    """引数が定義域外"""


class ShapeError(TlrcError, ValueError):
    """テンソル形状の不整合"""


class StatsMismatch(TlrcError, ValueError):
    """正規化統計のチャネル数が入力と一致しない"""


class EmptyCorpus(TlrcError):
    """利用可能な画像が1枚もない"""


# --- エントロピー符号化 ---

class StreamCorrupt(TlrcError):
    """レンジ符号のストリームが途中で終わった、または同期が崩れた"""


class AlphabetTooLarge(TlrcError, ValueError):
    """シンボル数が CDF の精度を超えている"""


class ComponentOrderViolation(TlrcError):
    """Y → Cr → Cb の復号順序に反する参照"""


# --- コンテナ / モデルファイル ---

class ChecksumMismatch(TlrcError):
    """チェックサムが一致しない"""


class VersionError(TlrcError):
    """未知のバージョンまたはフラグ"""


class MalformedContainer(TlrcError):
    """コンテナの構造が不正"""


class ShapeMismatch(TlrcError):
    """モデルファイル内のテンソル形状が設定と一致しない"""


class ModelMismatch(TlrcError):
    """コンテナが別のモデルで作成されている"""


# --- 学習 / 評価 ---

class NonFiniteLoss(TlrcError):
    """損失が NaN / Inf になった"""


class LosslessViolation(TlrcError):
    """可逆性の検証に失敗した"""


class MissingCorpusForQp(TlrcError):
    """指定品質のコーパスが見つからない"""
