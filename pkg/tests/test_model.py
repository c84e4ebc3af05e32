"""Generator, discriminator, losses, checkpoint round-trips."""

import json
import struct

import numpy as np
import pytest

import tlp
from tlp.errors import FormatVersionMismatch, NonDivisibleExtent, ShapeMismatch
from tlp.model import (
    CKPT_MAGIC,
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    LossConfig,
    discriminator_loss,
    generator_loss,
    load_checkpoint,
    save_checkpoint,
)
from tlp.tensor import Tensor


def tiny_inputs(rng, n=16, batch=1):
    x1 = Tensor(rng.standard_normal((batch, 1, n, n)).astype(np.float32) * 0.3)
    x2 = Tensor(rng.standard_normal((batch, 1, n, n)).astype(np.float32) * 0.3)
    prompt = Tensor(np.zeros((batch, 1, n, n), np.float32))
    return x1, x2, prompt


class TestGeneratorForward:
    def test_output_shape_64(self, rng, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=0)
        x1, x2, prompt = tiny_inputs(rng, n=64)
        assert gen.forward(x1, x2, prompt).shape == (1, 1, 64, 64)

    def test_output_in_open_interval(self, rng, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=0)
        x1, x2, prompt = tiny_inputs(rng, n=16)
        out = gen.forward(x1, x2, prompt).data
        assert np.all(out > -1.0) and np.all(out < 1.0)
        assert np.all(np.isfinite(out))

    def test_all_zero_prompt_accepted(self, rng, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=0)
        x1, x2, prompt = tiny_inputs(rng, n=16)
        out = gen.forward(x1, x2, prompt)
        assert np.all(np.isfinite(out.data))

    def test_prompt_changes_output_even_untrained(self, rng, tiny_gen_config):
        """The prompt is a real input channel, so it must influence the
        output structurally; the trained-model version of this check lives
        in the acceptance suite."""
        gen = Generator(tiny_gen_config, seed=0)
        x1, x2, prompt = tiny_inputs(rng, n=16)
        lesion = np.zeros((1, 1, 16, 16), np.float32)
        lesion[:, :, 4:9, 5:10] = 1.0
        out_none = gen.forward(x1, x2, prompt).data
        out_lesion = gen.forward(x1, x2, Tensor(lesion)).data
        assert float(np.abs(out_none - out_lesion).mean()) > 0.0

    def test_non_divisible_extent(self, rng, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=0)
        x1, x2, prompt = tiny_inputs(rng, n=18)
        with pytest.raises(NonDivisibleExtent):
            gen.forward(x1, x2, prompt)

    def test_shape_mismatches(self, rng, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=0)
        x1, x2, prompt = tiny_inputs(rng, n=16)
        with pytest.raises(ShapeMismatch):
            gen.forward(x1, None, prompt)
        bad = Tensor(np.zeros((1, 1, 8, 8), np.float32))
        with pytest.raises(ShapeMismatch):
            gen.forward(x1, bad, prompt)
        with pytest.raises(ShapeMismatch):
            gen.forward(x1, x2, bad)

    def test_single_input_has_no_branch2_or_fusion_params(self):
        cfg = GeneratorConfig(base_channels=4, levels=1, blocks_per_level=[1, 1],
                              heads_per_level=[1, 2], decoder_blocks_per_level=[1],
                              single_input=True)
        gen = Generator(cfg, seed=0)
        for path in gen.store.paths():
            assert not path.startswith("b2."), path
            assert "lf" not in path and "gf" not in path, path

    def test_single_input_forward(self, rng):
        cfg = GeneratorConfig(base_channels=4, levels=1, blocks_per_level=[1, 1],
                              heads_per_level=[1, 2], decoder_blocks_per_level=[1],
                              single_input=True)
        gen = Generator(cfg, seed=0)
        x1, x2, prompt = tiny_inputs(rng, n=8)
        out = gen.forward(x1, None, prompt)
        assert out.shape == (1, 1, 8, 8)
        with pytest.raises(ShapeMismatch):
            gen.forward(x1, x2, prompt)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GeneratorConfig(levels=0)
        with pytest.raises(ValueError):
            GeneratorConfig(levels=2, blocks_per_level=[1, 1])


class TestDiscriminator:
    def test_patch_map_64_to_6(self, rng):
        disc = Discriminator(seed=0)
        out = disc(Tensor(rng.standard_normal((1, 1, 64, 64)).astype(np.float32)))
        assert out.shape == (1, 1, 6, 6)

    def test_patch_extent_formula(self, rng):
        """Spatial extents follow conv arithmetic through the whole ladder."""
        disc = Discriminator(seed=0)
        h = w = 64
        for stride in disc.config.strides:
            h = (h + 2 - 4) // stride + 1
            w = (w + 2 - 4) // stride + 1
        out = disc(Tensor(rng.standard_normal((2, 1, 64, 64)).astype(np.float32)))
        assert out.shape == (2, 1, h, w)

    def test_constant_input_finite(self):
        disc = Discriminator(seed=0)
        out = disc(Tensor(np.full((1, 1, 64, 64), 0.5, np.float32)))
        assert np.all(np.isfinite(out.data))

    def test_shift_equivariance_interior(self, rng):
        """Translating compact content by one stride-product unit shifts the
        score map by exactly one cell (borders excluded)."""
        disc = Discriminator(seed=3)
        shift = 8  # product of the stride-2 stages
        base = np.zeros((1, 1, 64, 64), np.float32)
        base[:, :, 8:56, 8:40] = rng.standard_normal((48, 32)).astype(np.float32)
        shifted = np.roll(base, shift, axis=3)  # content stays clear of borders
        s0 = disc(Tensor(base)).data
        s1 = disc(Tensor(shifted)).data
        # two border cells per side carry the (non-translating) padding frame
        assert np.array_equal(s1[:, :, :, 2:-1], s0[:, :, :, 1:-2])
        assert s1[:, :, :, 2:-1].size > 0


class TestLosses:
    def test_generator_perfect_fixed_point(self):
        d_fake = Tensor(np.ones((2, 1, 3, 3), np.float32))
        y = Tensor(np.linspace(-0.5, 0.5, 18, dtype=np.float32).reshape(2, 1, 3, 3))
        loss = generator_loss(d_fake, y, y, LossConfig())
        assert loss.item() == 0.0

    def test_generator_hand_example(self):
        d_fake = Tensor(np.full((1, 1, 2, 2), 0.5, np.float32))
        y_hat = Tensor(np.full((1, 1, 2, 2), 0.01, np.float32))
        y = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        loss = generator_loss(d_fake, y_hat, y, LossConfig(lambda_pix=100.0))
        assert loss.item() == pytest.approx(1.25, abs=1e-6)

    def test_generator_lambda_zero(self, rng):
        d_fake = Tensor(rng.standard_normal((1, 1, 2, 2)).astype(np.float32))
        y_hat = Tensor(rng.standard_normal((1, 1, 4, 4)).astype(np.float32))
        y = Tensor(rng.standard_normal((1, 1, 4, 4)).astype(np.float32))
        loss = generator_loss(d_fake, y_hat, y, LossConfig(lambda_pix=0.0))
        expected = float(np.mean((d_fake.data - 1.0) ** 2))
        assert loss.item() == pytest.approx(expected, rel=1e-6)

    def test_discriminator_perfect_fixed_point(self):
        loss = discriminator_loss(Tensor(np.zeros((1, 1, 2, 2), np.float32)),
                                  Tensor(np.ones((1, 1, 2, 2), np.float32)))
        assert loss.item() == 0.0

    def test_discriminator_hand_example(self):
        loss = discriminator_loss(Tensor(np.full((1, 1, 3, 3), 0.5, np.float32)),
                                  Tensor(np.full((1, 1, 3, 3), 0.8, np.float32)))
        assert loss.item() == pytest.approx(0.29, abs=1e-6)

    def test_discriminator_maximal_confusion(self):
        half = Tensor(np.full((1, 1, 3, 3), 0.5, np.float32))
        assert discriminator_loss(half, half).item() == pytest.approx(0.5, abs=1e-7)

    def test_losses_partition_combined_objective(self, rng):
        """G loss + D loss reproduces the four-term combined objective."""
        for seed in range(10):
            r = np.random.default_rng(seed)
            d_fake = r.standard_normal((2, 1, 3, 3)).astype(np.float32)
            d_real = r.standard_normal((2, 1, 3, 3)).astype(np.float32)
            y_hat = r.standard_normal((2, 1, 8, 8)).astype(np.float32)
            y = r.standard_normal((2, 1, 8, 8)).astype(np.float32)
            lam = 100.0
            got = (generator_loss(Tensor(d_fake), Tensor(y_hat), Tensor(y), LossConfig(lam)).item()
                   + discriminator_loss(Tensor(d_fake), Tensor(d_real)).item())
            want = (np.mean(d_fake.astype(np.float64) ** 2)
                    + np.mean((d_real.astype(np.float64) - 1.0) ** 2)
                    + np.mean((d_fake.astype(np.float64) - 1.0) ** 2)
                    + lam * np.mean(np.abs(y_hat.astype(np.float64) - y.astype(np.float64))))
            assert abs(got - want) < 1e-4 * max(1.0, abs(want))

    def test_loss_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            generator_loss(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 4, 4))),
                           Tensor(np.zeros((1, 1, 5, 5))), LossConfig())
        with pytest.raises(ShapeMismatch):
            discriminator_loss(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=9)
        path = str(tmp_path / "g.tlpckpt")
        save_checkpoint(gen, path)
        loaded = load_checkpoint(path)
        assert loaded.kind == "generator"
        assert loaded.store.paths() == gen.store.paths()
        for p in gen.store.paths():
            assert np.array_equal(loaded.store[p].data, gen.store[p].data), p
        assert loaded.init_seed == gen.init_seed

    def test_two_saves_identical_bytes(self, tmp_path, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=9)
        p1, p2 = str(tmp_path / "a.tlpckpt"), str(tmp_path / "b.tlpckpt")
        save_checkpoint(gen, p1)
        save_checkpoint(gen, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_discriminator_round_trip(self, tmp_path):
        disc = Discriminator(DiscriminatorConfig(base_channels=8), seed=4)
        path = str(tmp_path / "d.tlpckpt")
        save_checkpoint(disc, path)
        loaded = load_checkpoint(path)
        assert loaded.kind == "discriminator"
        for p in disc.store.paths():
            assert np.array_equal(loaded.store[p].data, disc.store[p].data)

    def test_mismatched_config_raises(self, tmp_path, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=9)
        path = str(tmp_path / "g.tlpckpt")
        save_checkpoint(gen, path)
        blob = open(path, "rb").read()
        hlen = struct.unpack("<I", blob[8:12])[0]
        meta = json.loads(blob[12 : 12 + hlen])
        meta["config"]["base_channels"] = tiny_gen_config.base_channels * 2
        new_header = json.dumps(meta, sort_keys=True).encode("utf-8")
        hacked = blob[:8] + struct.pack("<I", len(new_header)) + new_header + blob[12 + hlen :]
        bad = tmp_path / "bad.tlpckpt"
        bad.write_bytes(hacked)
        with pytest.raises(ShapeMismatch):
            load_checkpoint(str(bad))

    def test_version_mismatch(self, tmp_path, tiny_gen_config):
        gen = Generator(tiny_gen_config, seed=9)
        path = tmp_path / "g.tlpckpt"
        save_checkpoint(gen, str(path))
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatVersionMismatch):
            load_checkpoint(str(path))

    def test_checkpoint_magic(self, tmp_path, tiny_gen_config):
        assert CKPT_MAGIC == b"TLPC"
        bad = tmp_path / "x.tlpckpt"
        bad.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(tlp.CorruptHeader):
            load_checkpoint(str(bad))


def test_end_to_end_generator_loss_gradient(rng):
    """FD check of the full loss through generator and discriminator on a
    16x16 instance, over a sample of parameters (full run in acceptance)."""
    from helpers import fd_param_normwise_rel_err

    cfg = GeneratorConfig(base_channels=4, levels=1, blocks_per_level=[1, 1],
                          heads_per_level=[1, 2], decoder_blocks_per_level=[1])
    gen = Generator(cfg, seed=5)
    disc = Discriminator(DiscriminatorConfig(base_channels=4, strides=(2, 2, 1)), seed=6)
    x1 = Tensor(rng.standard_normal((1, 1, 16, 16)).astype(np.float32) * 0.4)
    x2 = Tensor(rng.standard_normal((1, 1, 16, 16)).astype(np.float32) * 0.4)
    prompt = Tensor(np.zeros((1, 1, 16, 16), np.float32))
    y = Tensor(rng.standard_normal((1, 1, 16, 16)).astype(np.float32) * 0.4)

    def loss_fn():
        y_hat = gen.forward(x1, x2, prompt)
        return generator_loss(disc(y_hat), y_hat, y, LossConfig(lambda_pix=100.0))

    picker = np.random.default_rng(0)
    components = []
    paths = gen.store.paths()
    for path in picker.choice(paths, size=12, replace=False):
        t = gen.store[path]
        flat = int(picker.integers(t.size))
        components.append((gen.store, path, np.unravel_index(flat, t.shape)))
    err = fd_param_normwise_rel_err(loss_fn, (gen.store, disc.store), components)
    assert err < 2e-3, f"end-to-end rel err {err:.2e}"
