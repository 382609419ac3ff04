"""
学習コーパスの読み込み

ディレクトリ内の JPEG を解析し、ブランチごとに DCT画像のタイルを切り出す。
正規化統計はタイルではなく各画像全体から求める。
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config.settings import JPEG_SUFFIXES, TRAIN_SEED, TRAIN_TILE_SIZE, TRAIN_TILES_PER_IMAGE
from src.dct.image import NormStats, blocks_to_dct_image, compute_norm_stats, stack_dct_images
from src.errors import EmptyCorpus, UnsupportedJpeg
from src.jpeg import parse_jpeg
from src.transcoder.model import MODE_PLAN, ModelConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def list_jpegs(directory: PathLike) -> List[Path]:
    """拡張子で JPEG を列挙する（名前順）"""
    root = Path(directory)
    if not root.is_dir():
        raise EmptyCorpus(f"corpus directory not found: {root}")
    return sorted(p for p in root.iterdir() if p.is_file() and p.suffix in JPEG_SUFFIXES)


def extract_tiles(x: np.ndarray, tile: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    (H_b, W_b, C) から tile×tile のタイルを count 枚ランダムに切り出す

    画像がタイルより小さい辺は右下をゼロで埋める。
    """
    h, w, c = x.shape
    if h < tile or w < tile:
        padded = np.zeros((max(h, tile), max(w, tile), c), dtype=x.dtype)
        padded[:h, :w] = x
        x = padded
        h, w = x.shape[:2]
    tops = rng.integers(0, h - tile + 1, size=count)
    lefts = rng.integers(0, w - tile + 1, size=count)
    return np.stack([x[t:t + tile, l:l + tile] for t, l in zip(tops, lefts)])


@dataclass
class TileDataset:
    """ブランチ名 → (N, T, T, 64·n) の整数タイル"""
    tiles: Dict[str, np.ndarray]
    stats: Dict[str, NormStats]
    files: List[str] = field(default_factory=list)
    skipped: int = 0
    digest: str = ""

    @property
    def branch_names(self) -> Tuple[str, ...]:
        return tuple(name for name in self.tiles if len(self.tiles[name]))

    def __len__(self) -> int:
        return int(sum(len(t) for t in self.tiles.values()))

    def sample(self, branch: str, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        tiles = self.tiles[branch]
        index = rng.choice(len(tiles), size=batch_size, replace=len(tiles) < batch_size)
        return tiles[np.sort(index)]

    def batches(
        self, batch_size: int, rng: np.random.Generator, names: Optional[Sequence[str]] = None
    ) -> Iterator[Tuple[str, np.ndarray]]:
        """ブランチを順番に巡りながらミニバッチを返し続ける（names でブランチを絞れる）"""
        names = tuple(names) if names is not None else self.branch_names
        if not names:
            raise ValueError("no branch to draw batches from")
        step = 0
        while True:
            name = names[step % len(names)]
            yield name, self.sample(name, batch_size, rng)
            step += 1


def ingest_corpus(
    directory: PathLike,
    model_config: ModelConfig = ModelConfig(),
    tile: int = TRAIN_TILE_SIZE,
    tiles_per_image: int = TRAIN_TILES_PER_IMAGE,
    seed: int = TRAIN_SEED,
) -> TileDataset:
    """
    コーパスを読み込んでタイルデータセットを作る

    Raises:
        EmptyCorpus: 使える JPEG が1枚もない
    """
    rng = np.random.default_rng(seed)
    per_branch: Dict[str, List[np.ndarray]] = {name: [] for name in model_config.branch_names}
    tiles: Dict[str, List[np.ndarray]] = {name: [] for name in model_config.branch_names}
    files: List[str] = []
    skipped = 0
    digest = hashlib.sha256()

    for path in list_jpegs(directory):
        data = path.read_bytes()
        try:
            image = parse_jpeg(data)
        except UnsupportedJpeg as e:
            skipped += 1
            logger.warning(f"対象外のJPEGをスキップ: {path.name} ({e})")
            continue
        mode = image.sampling_mode
        if mode not in model_config.modes:
            skipped += 1
            logger.warning(f"モデルが扱わないサンプリングのためスキップ: {path.name} ({mode})")
            continue

        dct = [blocks_to_dct_image(p, i) for i, p in enumerate(image.coeff_planes)]
        for name, chain in MODE_PLAN[mode]:
            x = stack_dct_images([dct[i] for i in chain]).astype(np.int64)
            per_branch[name].append(x)
            tiles[name].append(extract_tiles(x, tile, tiles_per_image, rng))
        files.append(path.name)
        digest.update(path.name.encode("utf-8"))
        digest.update(hashlib.sha256(data).digest())

    if skipped:
        logger.warning(f"{skipped} 件のファイルをスキップしました")
    if not files:
        raise EmptyCorpus(f"no usable JPEG files in {directory}")

    stats = {name: compute_norm_stats(images) for name, images in per_branch.items() if images}
    packed = {name: np.concatenate(t) for name, t in tiles.items() if t}
    logger.info(
        f"コーパス読み込み完了: {len(files)} files, "
        + ", ".join(f"{name}={len(t)} tiles" for name, t in packed.items())
    )
    return TileDataset(tiles=packed, stats=stats, files=files, skipped=skipped, digest=digest.hexdigest())


def corpus_items(paths: Sequence[PathLike]) -> List[Tuple[str, bytes]]:
    """評価用に (ファイル名, バイト列) を読み込む"""
    return [(Path(p).name, Path(p).read_bytes()) for p in paths]
