import numpy as np
import pytest

from isle.codestream import encode, plan_decompositions, serialize
from isle.image_io import Image
from isle.optimizer import score_decompositions
from isle.scorer import ScorerSpec
from isle.service import StreamServer
from isle.synthetic import make_synthetic_corpus

# frozen validation corpus for the optimizer fixture
VAL_N, VAL_SIZE, VAL_LABELS, VAL_SEED, VAL_INPUT = 200, 512, 5, 7, 64


def random_image(rng, width, height, bit_depth=8):
    maxval = (1 << bit_depth) - 1
    return Image.from_array(rng.integers(0, maxval + 1, size=(height, width)), bit_depth)


def smooth_image(rng, width, height, bit_depth=8):
    """Gradient plus noise: nonconstant, with natural-ish statistics."""
    maxval = (1 << bit_depth) - 1
    yy, xx = np.mgrid[0:height, 0:width]
    base = 0.5 + 0.3 * np.sin(xx / max(width, 1) * 3 + rng.uniform(0, 6)) * np.cos(yy / max(height, 1) * 2)
    px = base * maxval + rng.normal(0, 0.02 * maxval, size=(height, width))
    return Image.from_array(np.clip(np.rint(px), 0, maxval).astype(np.int64), bit_depth)


@pytest.fixture(scope="session")
def val_corpus():
    images, labels = make_synthetic_corpus(VAL_N, VAL_SIZE, VAL_LABELS, VAL_SEED)
    streams = {aid: encode(img) for aid, img in zip(labels.asset_ids, images)}
    plan = plan_decompositions(VAL_SIZE, VAL_SIZE, 32)
    spec = ScorerSpec("linear_probe", VAL_INPUT, {"seed": VAL_SEED, "n_labels": VAL_LABELS})
    return images, labels, streams, plan, spec


@pytest.fixture(scope="session")
def val_scores(val_corpus):
    """Score matrices for every d on the validation corpus."""
    _, _, streams, plan, spec = val_corpus
    return score_decompositions(streams, spec, plan, range(plan.n_levels + 1))


@pytest.fixture(scope="session")
def small_store(tmp_path_factory):
    rng = np.random.default_rng(99)
    root = tmp_path_factory.mktemp("store")
    streams = {}
    for k, (w, h) in enumerate([(96, 80), (128, 128), (257, 130), (64, 64)]):
        img = smooth_image(rng, w, h, bit_depth=8 if k % 2 == 0 else 16)
        cs = encode(img)
        streams[f"asset{k}"] = cs
        (root / f"asset{k}.islc").write_bytes(serialize(cs))
    return root, streams


@pytest.fixture()
def server(small_store):
    root, streams = small_store
    srv = StreamServer(streams, "127.0.0.1:0").start()
    yield srv
    srv.stop()
