import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from slidegt import tensor as T
from slidegt.errors import ConfigError, ContractError
from slidegt.graph import FeatureGrid, build_graph
from slidegt.losses import cross_entropy
from slidegt.model import (BranchConfig, ModelConfig, SlideGraphTransformer,
                           default_branches, predict_proba)
from slidegt.tensor import backward


def small_config(**kw):
    defaults = dict(
        input_dim=5, dim=8, gcn_layers=1, heads=2, transformer_depth=1,
        branches=(
            BranchConfig(task="typing", pooling="drop", tokens=3, pool_size=4),
            BranchConfig(task="staging", pooling="gcmincut", tokens=3, pool_size=2),
        ),
    )
    defaults.update(kw)
    return ModelConfig(**defaults)


def small_graph(seed=0, rows=3, cols=4, dim=5, fill=0.8):
    rng = np.random.default_rng(seed)
    mask = rng.random((rows, cols)) < fill
    if not mask.any():
        mask[0, 0] = True
    feats = rng.normal(0, 1, (int(mask.sum()), dim))
    return build_graph(FeatureGrid(rows=rows, cols=cols, occupancy=mask,
                                   features=feats))


def test_untrained_binary_heads_sit_exactly_at_half():
    # zero-init output layer -> logits are exactly zero before training
    model = SlideGraphTransformer(small_config(), seed=1)
    probs = predict_proba(model, small_graph(2))
    for task in ("typing", "staging"):
        assert_array_equal(probs[task], [0.5, 0.5])


def test_forward_shapes_and_aux():
    model = SlideGraphTransformer(small_config(), seed=3)
    g = small_graph(4)
    out = model.forward(g, np.random.default_rng(0))
    assert set(out.logits) == {"typing", "staging"}
    for task in out.logits:
        assert out.logits[task].shape == (1, 2)
    assert set(out.assignments) == {"staging"}
    assert out.assignments["staging"].shape == (g.n_nodes, 2)
    assert set(out.kept) == {"typing"}
    assert len(out.kept["typing"]) == min(4, g.n_nodes)


def test_capture_embeddings_returns_refined_node_matrices():
    model = SlideGraphTransformer(small_config(), seed=5)
    g = small_graph(6)
    out = model.forward(g, np.random.default_rng(0), capture_embeddings=True)
    for task in ("typing", "staging"):
        emb = out.embeddings[task]
        assert emb.shape == (g.n_nodes, 8)
        assert np.isfinite(emb).all()
    assert not np.array_equal(out.embeddings["typing"],
                              out.embeddings["staging"])


def test_logits_are_invariant_to_node_relabeling():
    """Permuting grid traversal order must not change either head.

    The clustering branch is deterministic; the drop branch is pinned to the
    same physical nodes on both sides via keep_override.
    """
    rng = np.random.default_rng(7)
    rows, cols = 3, 4
    mask = rng.random((rows, cols)) < 0.8
    n = int(mask.sum())
    feats = rng.normal(0, 1, (n, 5))
    g = build_graph(FeatureGrid(rows, cols, mask, feats))

    # same physical grid, transposed traversal: node i of g sits at row
    # perm[i] of the transposed build
    gt = build_graph(FeatureGrid(cols, rows, mask.T, np.zeros((n, 5))))
    cells = np.argwhere(mask)
    perm = np.lexsort((cells[:, 0], cells[:, 1]))  # col-major visit order
    inv = np.empty(n, dtype=np.intp)
    inv[perm] = np.arange(n)
    gt = build_graph(FeatureGrid(cols, rows, mask.T, feats[perm]))

    model = SlideGraphTransformer(small_config(), seed=8)
    kept = np.array([0, 2])
    out_a = model.forward(g, None, keep_override={"typing": kept})
    kept_t = np.sort(inv[kept])
    out_b = model.forward(gt, None, keep_override={"typing": kept_t})
    for task in ("typing", "staging"):
        assert_allclose(out_a.logits[task].data, out_b.logits[task].data,
                        atol=1e-10)


def test_task_gradients_stay_inside_their_branch():
    cfg = small_config(head_init="random")
    model = SlideGraphTransformer(cfg, seed=9)
    g = small_graph(10)
    model.zero_grad()
    out = model.forward(g, np.random.default_rng(1))
    backward(cross_entropy(out.logits["typing"], [1]))

    by_name = dict(model.parameters())
    typing_norm = sum(np.abs(p.grad).sum() for n, p in by_name.items()
                      if n.startswith("typing."))
    staging_norm = sum(np.abs(p.grad).sum() for n, p in by_name.items()
                       if n.startswith("staging."))
    gcn_norm = sum(np.abs(p.grad).sum() for n, p in by_name.items()
                   if n.startswith("gcn."))
    assert typing_norm > 0.0
    assert staging_norm == 0.0  # the other branch never sees this loss
    assert gcn_norm > 0.0       # but the shared encoder does


def test_shared_token_scheme_registers_one_bank():
    shared = SlideGraphTransformer(small_config(token_scheme="shared"), seed=11)
    names = [n for n, _ in shared.parameters()]
    assert any(n.startswith("shared.") for n in names)
    assert not any(".bank." in n for n in names)
    spec = SlideGraphTransformer(small_config(), seed=11)
    spec_names = [n for n, _ in spec.parameters()]
    assert any(n.startswith("typing.bank.") for n in spec_names)
    assert any(n.startswith("staging.bank.") for n in spec_names)
    # both branches route through the same object
    banks = {id(b.bank) for b in shared.branches.values()}
    assert len(banks) == 1


def test_single_task_model_has_no_other_branch():
    cfg = small_config(branches=(
        BranchConfig(task="staging", pooling="gcmincut", tokens=3, pool_size=2),))
    model = SlideGraphTransformer(cfg, seed=12)
    out = model.forward(small_graph(13), np.random.default_rng(0))
    assert set(out.logits) == {"staging"}
    assert not any(n.startswith("typing.") for n, _ in model.parameters())


def test_predict_proba_rows_are_distributions():
    model = SlideGraphTransformer(small_config(head_init="random"), seed=14)
    probs = predict_proba(model, small_graph(15))
    for p in probs.values():
        assert p.shape == (2,)
        assert_allclose(p.sum(), 1.0, atol=1e-12)
        assert (p >= 0).all()


def test_same_seed_builds_identical_models():
    a = SlideGraphTransformer(small_config(), seed=21)
    b = SlideGraphTransformer(small_config(), seed=21)
    for (na, pa), (nb, pb) in zip(a.parameters(), b.parameters()):
        assert na == nb
        assert_array_equal(pa.data, pb.data)


def test_forward_rejects_wrong_feature_width():
    model = SlideGraphTransformer(small_config(), seed=16)
    with pytest.raises(ContractError, match="width"):
        model.forward(small_graph(17, dim=7), np.random.default_rng(0))


def test_config_validation():
    with pytest.raises(ConfigError, match="divide"):
        small_config(dim=9).validate()
    with pytest.raises(ConfigError, match="token scheme"):
        small_config(token_scheme="global").validate()
    with pytest.raises(ConfigError, match="duplicate task"):
        small_config(branches=(BranchConfig(task="typing"),
                               BranchConfig(task="typing"))).validate()
    with pytest.raises(ConfigError, match="equal token counts"):
        small_config(token_scheme="shared", branches=(
            BranchConfig(task="typing", tokens=3),
            BranchConfig(task="staging", tokens=4))).validate()
    with pytest.raises(ConfigError, match="at least one task"):
        small_config(branches=()).validate()
    with pytest.raises(ConfigError, match="classes"):
        BranchConfig(task="typing", classes=1).validate()


def test_config_round_trips_through_dict():
    cfg = small_config(token_scheme="shared", scale_attention=False)
    again = ModelConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert default_branches()[0].task == "typing"
