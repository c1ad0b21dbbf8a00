import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from gd2fusion import FusionEstimator, make_dataset
from gd2fusion.prompts import PromptSpec

TINY = dict(channels=4, layers=1, n_conv=1, n_transformer=1, prompt_dim=16, window=4, patch=16, batch_size=2, epochs=1)


@pytest.fixture(scope="module")
def samples():
    return make_dataset(count=4, seed=2, size=24)


def test_params_roundtrip():
    est = FusionEstimator(**TINY, seed=3)
    params = est.get_params()
    assert params["channels"] == 4 and params["seed"] == 3
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(lr=1e-3)
    assert est.lr == 1e-3 and est.train_config().lr == 1e-3
    assert est.network_config().window == 4


def test_fit_transform_score(samples, tmp_path):
    est = FusionEstimator(**TINY, out_dir=str(tmp_path)).fit(samples)
    assert len(est.history_) == 2 and est.checkpoint_.exists()
    out = est.transform(samples)
    assert out.shape == (4, 3, 24, 24) and out.dtype == np.float32
    assert out.min() >= 0 and out.max() <= 1
    assert np.array_equal(est.predict(samples), out)
    assert est.score(samples) < 0


def test_unfitted_and_bad_input(samples):
    est = FusionEstimator(**TINY)
    with pytest.raises(NotFittedError):
        est.transform(samples)
    with pytest.raises(ValueError):
        est.fit([])
    with pytest.raises(TypeError):
        est.fit([np.zeros((3, 8, 8))])


def test_save_and_reload(samples, tmp_path):
    est = FusionEstimator(**TINY, out_dir=str(tmp_path / "run")).fit(samples)
    path = est.save(tmp_path / "est.gd2")
    back = FusionEstimator.from_checkpoint(path)
    assert back.channels == 4 and back.window == 4
    assert np.array_equal(back.transform(samples), est.transform(samples))
    trained = FusionEstimator.from_checkpoint(est.checkpoint_)
    assert trained.patch == 16 and trained.batch_size == 2


def test_fuse_accepts_single_and_batched(samples, tmp_path):
    est = FusionEstimator(**TINY, out_dir=str(tmp_path)).fit(samples)
    s = samples[0]
    one = est.fuse(s.ir_degraded, s.vi_degraded, s.prompt_ir, s.prompt_vi)
    assert one.shape == (3, 24, 24)
    batch = est.fuse(
        np.stack([t.ir_degraded for t in samples[:2]]),
        np.stack([t.vi_degraded for t in samples[:2]]),
        [t.prompt_ir for t in samples[:2]],
        [t.prompt_vi for t in samples[:2]],
    )
    assert np.allclose(batch[0], one, atol=1e-6)
    u8 = np.round(s.ir_degraded * 255).astype(np.uint8)
    v8 = np.round(s.vi_degraded * 255).astype(np.uint8)
    assert np.allclose(est.fuse(u8, v8, s.prompt_ir, s.prompt_vi), one, atol=1e-5)
    with pytest.raises(ValueError):
        est.fuse(s.ir_degraded, s.vi_degraded, [PromptSpec("infrared", ("noise",))] * 3, s.prompt_vi)
