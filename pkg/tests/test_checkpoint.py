"""Checkpoint format: bit-exact round trips and strict mismatch reporting."""

import numpy as np
import pytest

from nextloc.autodiff import Parameter
from nextloc.checkpoint import (
    CheckpointError,
    load_checkpoint,
    restore_into,
    save_checkpoint,
)


def sample_arrays(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "emb.loc": rng.normal(size=(7, 3)).astype(np.float32),
        "head.w": rng.normal(size=(3, 5)).astype(np.float32),
        "opt.step": np.array([12], dtype=np.int64),
    }


class TestRoundTrip:
    def test_bit_exact(self, tmp_path):
        arrays = sample_arrays()
        meta = {"seed": 7, "config": {"alpha": 0.7}, "dataset_hash": "abc"}
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, arrays, meta)
        loaded, meta2 = load_checkpoint(path)
        assert meta2 == meta
        assert set(loaded) == set(arrays)
        for k in arrays:
            assert loaded[k].dtype == arrays[k].dtype
            np.testing.assert_array_equal(loaded[k], arrays[k])
            assert loaded[k].tobytes() == arrays[k].tobytes()

    def test_float64_supported(self, tmp_path):
        arrays = {"x": np.arange(4, dtype=np.float64)}
        save_checkpoint(tmp_path / "m.ckpt", arrays, {})
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        assert loaded["x"].tobytes() == arrays["x"].tobytes()

    def test_corruption_detected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, sample_arrays(), {})
        raw = bytearray(path.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError, match="checksum"):
            load_checkpoint(path)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"hello world, definitely not a checkpoint")
        with pytest.raises(CheckpointError, match="not a checkpoint"):
            load_checkpoint(path)


class TestRestore:
    def make_params(self, names_shapes):
        return [Parameter(np.zeros(s, dtype=np.float32), n) for n, s in names_shapes]

    def test_restore_matches(self, tmp_path):
        params = self.make_params([("a", (2, 2)), ("b", (3,))])
        arrays = {"a": np.ones((2, 2), dtype=np.float32),
                  "b": np.full(3, 2.0, dtype=np.float32)}
        save_checkpoint(tmp_path / "m.ckpt", arrays, {})
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        restore_into(params, loaded)
        np.testing.assert_array_equal(params[0].data, arrays["a"])

    def test_renamed_parameter_is_named_error(self, tmp_path):
        params = self.make_params([("a_renamed", (2, 2))])
        save_checkpoint(tmp_path / "m.ckpt", {"a": np.ones((2, 2), dtype=np.float32)}, {})
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        with pytest.raises(CheckpointError) as ei:
            restore_into(params, loaded)
        assert "a_renamed" in str(ei.value) and "missing" in str(ei.value)

    def test_missing_tensors_all_listed(self, tmp_path):
        # a reduced-model checkpoint loaded into a larger model must name
        # every tensor it lacks
        params = self.make_params([("shared", (2,)), ("extra.one", (2,)), ("extra.two", (3,))])
        save_checkpoint(tmp_path / "m.ckpt", {"shared": np.zeros(2, dtype=np.float32)}, {})
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        with pytest.raises(CheckpointError) as ei:
            restore_into(params, loaded)
        assert "extra.one" in str(ei.value) and "extra.two" in str(ei.value)

    def test_shape_mismatch_reported(self, tmp_path):
        params = self.make_params([("a", (2, 3))])
        save_checkpoint(tmp_path / "m.ckpt", {"a": np.zeros((3, 2), dtype=np.float32)}, {})
        loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
        with pytest.raises(CheckpointError, match="shape mismatch"):
            restore_into(params, loaded)
