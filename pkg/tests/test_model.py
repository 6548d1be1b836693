import pytest
import torch
from hypothesis import given, settings, strategies as st

from gnm.baselines import build_model
from gnm.config import micro_model_config
from gnm.model import (GNM, Noise, NonFiniteLatent, ShapeError, box_to_xyxy, extract_glimpses, place_glimpses,
                       render, where_to_box)
from gnm.model.dists import bernoulli_sample, relaxed_bernoulli_sample
from gnm.model.struct import sample_struct


def random_scene(B=2, N=4, G=8, I=16, seed=0, pres=None):
    g = torch.Generator().manual_seed(seed)
    glimpse = torch.rand(B, N, 3, G, G, generator=g)
    mask = torch.rand(B, N, 1, G, G, generator=g)
    pres = torch.rand(B, N, generator=g) if pres is None else pres
    depth = torch.randn(B, N, generator=g)
    centers = torch.rand(B, N, 2, generator=g) * I
    sizes = 2 + torch.rand(B, N, 2, generator=g) * I
    bg = torch.rand(B, 3, I, I, generator=g)
    return glimpse, mask, pres, depth, torch.cat([centers, sizes], -1), bg


@pytest.fixture(scope="module")
def micro():
    torch.manual_seed(0)
    return build_model(micro_model_config()).eval()


# -- renderer ----------------------------------------------------------------


class TestRender:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_absent_objects_leave_background(self, seed):
        glimpse, mask, _, depth, boxes, bg = random_scene(seed=seed, pres=torch.zeros(2, 4))
        out = render(glimpse, mask, torch.zeros(2, 4), depth, boxes, bg)
        assert torch.equal(out.x_tilde, bg)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_responsibilities_and_range(self, seed):
        out = render(*random_scene(seed=seed))
        assert (out.gamma.sum(1) <= 1 + 1e-6).all()
        assert (out.gamma >= 0).all()
        for t in (out.x_tilde, out.x_fg, out.mask):
            assert t.min() >= 0 and t.max() <= 1

    def test_full_frame_object(self):
        I = 16
        o = torch.rand(1, 1, 3, I, I, generator=torch.Generator().manual_seed(3))
        boxes = torch.tensor([[[I / 2, I / 2, I, I]]])
        out = render(o, torch.ones(1, 1, 1, I, I), torch.ones(1, 1), torch.zeros(1, 1), boxes,
                     torch.rand(1, 3, I, I))
        torch.testing.assert_close(out.x_tilde[..., 1:-1, 1:-1], o[:, 0, :, 1:-1, 1:-1], atol=1e-4, rtol=0)

    def test_nearer_object_wins(self):
        I = 16
        o = torch.stack([torch.zeros(3, I, I), torch.ones(3, I, I)])[None]
        boxes = torch.tensor([[[I / 2, I / 2, I, I]] * 2])
        out = render(o, torch.ones(1, 2, 1, I, I), torch.ones(1, 2), torch.tensor([[5.0, -5.0]]), boxes,
                     torch.zeros(1, 3, I, I))
        assert out.x_tilde.mean() > 0.99

    def test_shape_errors(self):
        glimpse, mask, pres, depth, boxes, bg = random_scene()
        with pytest.raises(ShapeError):
            render(glimpse[:, :, :2], mask, pres, depth, boxes, bg)
        with pytest.raises(ShapeError):
            render(glimpse, mask, pres, depth, boxes[:, :3], bg)


@settings(max_examples=50, deadline=None)
@given(raw=st.lists(st.floats(-20, 20), min_size=4, max_size=4))
def test_where_to_box_ranges(raw):
    grid, I, s_max = 4, 64, 36.0
    where = torch.tensor(raw, dtype=torch.float64).expand(grid * grid, 4)
    box = where_to_box(where, grid, I, s_max)
    pitch = I / grid
    idx = torch.arange(grid * grid)
    cx, cy = (idx % grid + 0.5) * pitch, (idx // grid + 0.5) * pitch
    assert ((box[:, 0] - cx).abs() <= pitch / 2).all()
    assert ((box[:, 1] - cy).abs() <= pitch / 2).all()
    assert ((box[:, 2:] >= 0) & (box[:, 2:] <= s_max)).all()


def test_box_to_xyxy_clamps():
    xyxy = box_to_xyxy(torch.tensor([[2.0, 3.0, 10.0, 4.0]]), 8)
    torch.testing.assert_close(xyxy, torch.tensor([[0.0, 1.0, 7.0, 5.0]]))


def test_extract_then_place_recovers_patch():
    I, G = 32, 32
    img = torch.rand(1, 3, I, I)
    boxes = torch.tensor([[[I / 2, I / 2, I, I]]])
    patch = extract_glimpses(img, boxes, G)
    torch.testing.assert_close(patch[:, 0], img, atol=1e-5, rtol=0)
    torch.testing.assert_close(place_glimpses(patch, boxes, I)[:, 0], img, atol=1e-5, rtol=0)


# -- sampling primitives -----------------------------------------------------


def test_noise_is_seeded():
    a, b = Noise(3), Noise(3)
    like = torch.zeros(5)
    assert torch.equal(a.normal(like), b.normal(like))
    assert torch.equal(Noise(None).normal(like), like)


@given(logit=st.floats(-6, 6), tau=st.floats(0.3, 3))
def test_relaxed_bernoulli_in_closed_unit_interval(logit, tau):
    s = relaxed_bernoulli_sample(torch.full((64,), logit), tau, Noise(0))
    assert ((s >= 0) & (s <= 1)).all()


def test_relaxed_bernoulli_mean_tracks_probability():
    logits = torch.full((20_000,), 1.0)
    s = relaxed_bernoulli_sample(logits, 0.05, Noise(1))
    assert abs(s.mean().item() - torch.sigmoid(torch.tensor(1.0)).item()) < 0.02
    assert set(bernoulli_sample(logits[:10], Noise(None)).tolist()) == {1.0}


# -- the full model ----------------------------------------------------------


class TestGNM:
    def test_reconstruct_shapes(self, micro):
        x = torch.rand(3, 3, 16, 16)
        out, tr = micro.reconstruct(x, Noise(0))
        assert out.x_tilde.shape == x.shape
        assert out.gamma.shape == (3, 4, 1, 16, 16)
        assert tr.glob.z.shape == (3, 2, 4)
        assert tr.q.pres_logit.shape == (3, 4)
        assert tr.n_factors == 4 + 1 + 2

    def test_prior_and_posterior_share_structure_net(self, micro):
        x = torch.rand(2, 3, 16, 16)
        _, tr = micro.reconstruct(x, Noise(0))
        p = micro.struct_params(tr.glob.f)
        assert torch.equal(p.pres_logit, tr.p.pres_logit)

    def test_generate_is_seed_deterministic(self, micro):
        a, b, c = micro.generate(4, seed=1), micro.generate(4, seed=1), micro.generate(4, seed=2)
        assert torch.equal(a, b) and not torch.equal(a, c)
        assert a.shape == (4, 3, 16, 16) and a.min() >= 0 and a.max() <= 1

    def test_global_rollout_matches_prior_sample(self, micro):
        glob = micro.sample_global_prior(2, Noise(5))
        again = micro.global_from_z(glob.z)
        torch.testing.assert_close(again.f, glob.f)

    def test_importance_weights_shape(self, micro):
        lw = micro.importance_log_weights(torch.rand(2, 3, 16, 16), K=3, seed=0)
        assert lw.shape == (3, 2) and torch.isfinite(lw).all()

    def test_wrong_image_size(self, micro):
        with pytest.raises(ShapeError):
            micro.reconstruct(torch.rand(1, 3, 32, 32), Noise(0))

    def test_nan_input_is_reported(self, micro):
        x = torch.full((1, 3, 16, 16), float("nan"))
        with pytest.raises(NonFiniteLatent):
            micro.reconstruct(x, Noise(0))

    def test_mode_sampling_is_noise_free(self, micro):
        glob = micro.sample_global_prior(1, Noise(0))
        p = micro.struct_params(glob.f)
        a, b = sample_struct(p, Noise(1), mode="mode"), sample_struct(p, Noise(2), mode="mode")
        assert torch.equal(a.where, b.where) and torch.equal(a.pres, b.pres)

    def test_gaussian_prior_variant(self):
        model = GNM(micro_model_config(kind="GNM_GAUSSIAN"), global_prior="gaussian")
        assert model.generate(2, seed=0).shape == (2, 3, 16, 16)
        with pytest.raises(ValueError):
            GNM(micro_model_config(), global_prior="flow")
