import numpy as np
import pytest

import oracles
from facemotion import losses, rvq
from facemotion.errors import IncompatibleShapeError, ModelConfigError
from facemotion.motion_core import BlendshapeModel, MotionSequence


def unit_basis_model(n=12, lips=(0, 1, 2), face=(0, 1, 2, 3, 4, 5, 6, 7), upper=(8, 9)):
    """Model whose expression channel 0 moves vertex lips[0] by +x only."""
    expr_basis = np.zeros((n, 3, 50))
    expr_basis[lips[0], 0, 0] = 1.0
    return BlendshapeModel(
        template=np.arange(n * 3, dtype=np.float64).reshape(n, 3) * 0.01,
        expr_basis=expr_basis,
        eyelid_basis=np.zeros((n, 3, 2)),
        jaw_joint=np.zeros(3),
        jaw_region=np.array([3]),
        regions={"lips": np.array(lips), "face": np.array(face), "upper_face": np.array(upper)},
        landmarks={"upper_lip": 0, "lower_lip": 1, "left_corner": 2, "right_corner": 3},
    )


def seeded_pair(rng, t=12, scale=0.05):
    a = MotionSequence(rng.standard_normal((t, 58)) * scale)
    b = MotionSequence(a.params + rng.standard_normal((t, 58)) * scale * 0.1)
    return a, b


# ---------------------------------------------------------------------------
# param_loss


def test_param_loss_identical_is_zero(rng):
    m, _ = seeded_pair(rng)
    assert losses.param_loss(m, m) == 0.0


def test_param_loss_single_channel_anchor():
    a = MotionSequence(np.zeros((1, 58)))
    b_params = np.zeros((1, 58))
    b_params[0, 17] = 2.0
    b = MotionSequence(b_params)
    assert losses.param_loss(a, b) == pytest.approx(4.0 / 58.0, rel=1e-15)


def test_param_loss_matches_summation_oracle(rng):
    a, b = seeded_pair(rng)
    assert losses.param_loss(a, b) == pytest.approx(oracles.mean_squared(a.params - b.params), rel=1e-12)


def test_param_loss_length_mismatch(rng):
    a, _ = seeded_pair(rng, t=5)
    b, _ = seeded_pair(rng, t=6)
    with pytest.raises(IncompatibleShapeError):
        losses.param_loss(a, b)


def test_param_loss_symmetry(rng):
    a, b = seeded_pair(rng)
    assert losses.param_loss(a, b) == losses.param_loss(b, a)


# ---------------------------------------------------------------------------
# geo_loss


def test_geo_loss_identical_is_zero(seed0_model, rng):
    m, _ = seeded_pair(rng, t=4)
    assert losses.geo_loss(seed0_model, m, m) == (0.0, 0.0)


def test_geo_loss_single_vertex_single_frame_anchor():
    model = unit_basis_model()
    t = 6
    a = MotionSequence(np.zeros((t, 58)))
    params = np.zeros((t, 58))
    params[2, 0] = 1e-3  # moves one lip vertex by 1e-3 m in frame 2
    b = MotionSequence(params)
    l_lips, l_face = losses.geo_loss(model, a, b)
    assert l_lips == pytest.approx(1e-6 / (t * 3 * 3), rel=1e-12)  # |lips| = 3
    assert l_face == pytest.approx(1e-6 / (t * 8 * 3), rel=1e-12)  # |face| = 8


def test_geo_loss_matches_vertex_oracle(seed0_model, rng):
    from facemotion.motion_core import sequence_vertex_array

    a, b = seeded_pair(rng, t=5)
    l_lips, l_face = losses.geo_loss(seed0_model, a, b)
    va = sequence_vertex_array(seed0_model, a, zero_posed=True)
    vb = sequence_vertex_array(seed0_model, b, zero_posed=True)
    lips = seed0_model.region("lips")
    face = seed0_model.region("face")
    assert l_lips == pytest.approx(oracles.mean_squared(va[:, lips] - vb[:, lips]), rel=1e-12)
    assert l_face == pytest.approx(oracles.mean_squared(va[:, face] - vb[:, face]), rel=1e-12)


def test_geo_loss_missing_region():
    model = unit_basis_model()
    model.regions.pop("face")
    a = MotionSequence(np.zeros((3, 58)))
    with pytest.raises(ModelConfigError):
        losses.geo_loss(model, a, a)


def test_geo_loss_invariant_to_shared_global_pose(seed0_model, rng):
    a, b = seeded_pair(rng, t=4)
    base = losses.geo_loss(seed0_model, a, b)
    pose = np.array([0.4, -0.2, 0.1])
    ap = MotionSequence(a.params.copy())
    bp = MotionSequence(b.params.copy())
    ap.params[:, 53:56] = pose
    bp.params[:, 53:56] = pose
    assert losses.geo_loss(seed0_model, ap, bp) == base


# ---------------------------------------------------------------------------
# dyn_loss


def test_dyn_loss_identical_is_zero(seed0_model, rng):
    m, _ = seeded_pair(rng, t=5)
    assert losses.dyn_loss(seed0_model, m, m) == (0.0, 0.0)


def test_dyn_loss_cancels_constant_offset(seed0_model, rng):
    a, _ = seeded_pair(rng, t=6)
    a.params[:, 50:56] = 0.0  # no jaw/global rotation: expression maps linearly
    shifted = a.params.copy()
    shifted[:, 3] += 0.05  # constant expression offset -> constant vertex offset
    b = MotionSequence(shifted)
    l_vel, l_acc = losses.dyn_loss(seed0_model, a, b)
    assert l_vel < 1e-28
    assert l_acc < 1e-28


def test_dyn_loss_matches_difference_oracle(seed0_model, rng):
    from facemotion.motion_core import sequence_vertex_array

    a, b = seeded_pair(rng, t=6)
    l_vel, l_acc = losses.dyn_loss(seed0_model, a, b)
    va = sequence_vertex_array(seed0_model, a, zero_posed=True)
    vb = sequence_vertex_array(seed0_model, b, zero_posed=True)
    dva, dvb = np.diff(va, axis=0), np.diff(vb, axis=0)
    assert l_vel == pytest.approx(oracles.mean_squared(dva - dvb), rel=1e-12)
    assert l_acc == pytest.approx(oracles.mean_squared(np.diff(dva, axis=0) - np.diff(dvb, axis=0)), rel=1e-12)


def test_dyn_loss_too_short(seed0_model, rng):
    a, b = seeded_pair(rng, t=2)
    with pytest.raises(ValueError):
        losses.dyn_loss(seed0_model, a, b)


# ---------------------------------------------------------------------------
# total_losses


def test_total_losses_all_zero_for_perfect_reconstruction(seed0_model, rng):
    m, _ = seeded_pair(rng, t=5)
    z = rvq.LatentSequence(rng.standard_normal((3, 4)))
    report = losses.total_losses(seed0_model, m, m, z=z, q=rvq.LatentSequence(z.vectors.copy()))
    assert report.l_rec == 0.0
    assert report.l_vqvae == 0.0


def test_rec_weighting_anchor_500901():
    w = losses.LossWeights()
    assert losses.combine_rec(1.0, 2.0, 3.0, 4.0, 5.0, w) == 500901.0


def test_rec_weight_scaling_is_exact():
    w = losses.LossWeights(w_geo=2e5)
    base = losses.LossWeights()
    delta = losses.combine_rec(1, 2, 3, 4, 5, w) - losses.combine_rec(1, 2, 3, 4, 5, base)
    assert delta == 1e5 * (2 + 3)


def test_total_losses_report_consistency(seed0_model, rng):
    a, b = seeded_pair(rng, t=6)
    z = rvq.LatentSequence(rng.standard_normal((4, 8)))
    q = rvq.LatentSequence(z.vectors + rng.standard_normal((4, 8)) * 0.1)
    w = losses.LossWeights()
    report = losses.total_losses(seed0_model, a, b, z=z, q=q, weights=w)
    assert report.l_rec == pytest.approx(
        w.w_param * report.l_param + w.w_geo * (report.l_lips + report.l_face) + w.w_dyn * (report.l_vel + report.l_acc),
        rel=1e-9,
    )
    codebook_term, commit_term, _ = rvq.commitment_loss(z, q, w.gamma)
    assert report.codebook_term == codebook_term
    assert report.commit_term == commit_term
    assert report.l_vqvae == report.l_rec + codebook_term + commit_term
    for value in (report.l_param, report.l_lips, report.l_face, report.l_vel, report.l_acc):
        assert value >= 0.0


def test_total_losses_end_to_end_oracle(seed0_model, rng):
    from facemotion.motion_core import sequence_vertex_array

    a, b = seeded_pair(rng, t=6)
    report = losses.total_losses(seed0_model, a, b)
    va = sequence_vertex_array(seed0_model, a, zero_posed=True)
    vb = sequence_vertex_array(seed0_model, b, zero_posed=True)
    lips = seed0_model.region("lips")
    face = seed0_model.region("face")
    expected = (
        1.0 * oracles.mean_squared(a.params - b.params)
        + 1e5 * (oracles.mean_squared(va[:, lips] - vb[:, lips]) + oracles.mean_squared(va[:, face] - vb[:, face]))
        + 1e2
        * (
            oracles.mean_squared(np.diff(va, axis=0) - np.diff(vb, axis=0))
            + oracles.mean_squared(np.diff(va, axis=0, n=2) - np.diff(vb, axis=0, n=2))
        )
    )
    assert report.l_rec == pytest.approx(expected, rel=1e-10)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        losses.LossWeights(w_geo=-1.0)
    with pytest.raises(ValueError):
        losses.LossWeights(reduction="sum")
