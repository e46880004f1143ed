"""End-to-end smoke checks for the python bindings."""

import os
from pathlib import Path

import numpy as np
import pytest

import _splitkit as sk

FIXTURES = Path(os.environ.get("SPLITKIT_FIXTURES", "tests/fixtures")) / "digits"


@pytest.fixture(scope="module")
def model():
    return sk.load_model(str(FIXTURES / "model.json"))


@pytest.fixture(scope="module")
def dataset():
    return sk.load_mnist_idx(
        str(FIXTURES / "t10k-images-idx3-ubyte"), str(FIXTURES / "t10k-labels-idx1-ubyte")
    )


def test_model_loads_and_classifies(model, dataset):
    assert model.input_shape == [1, 28, 28]
    hits = 0
    for sample in dataset[:20]:
        out = sk.forward(model, sample.image).output
        hits += int(np.argmax(out) == sample.label)
    assert hits >= 17


def test_split_correctness(model, dataset):
    snet = sk.split_network(model, "convex")
    assert snet.max_negativity == 0.0
    x = dataset[0].image
    f = sk.forward(model, x).output
    xp, xn = sk.split_input(x, "half")
    st = sk.split_forward(snet, xp, xn)
    assert np.max(np.abs((st.g - st.h) - f)) <= 1e-9 * max(1.0, np.max(np.abs(f)))


def test_splitgrad_half_alpha_matches_half_gradient(model, dataset):
    snet = sk.split_network(model)
    sample = dataset[1]
    tr = sk.forward(model, sample.image)
    xp, xn = sk.split_input(sample.image, "half")
    st = sk.split_forward(snet, xp, xn)
    sens = sk.local_sensitivities(snet, st, tr, alpha=0.5, out_index=sample.label)
    half = sk.split_grad_map(sens, layer=0, stream="g")
    grad = sk.vanilla_gradient(model, sample.image, sample.label, reduce_channels=True)
    assert np.max(np.abs(half - 0.5 * grad)) <= 1e-9


def test_metrics_roundtrip(model, dataset):
    sample = dataset[2]
    snet = sk.split_network(model)
    tr = sk.forward(model, sample.image)
    xp, xn = sk.split_input(sample.image, "half")
    st = sk.split_forward(snet, xp, xn, forward_mode="scale", correct_forward=True, cache=tr)
    sens = sk.local_sensitivities(snet, st, tr, alpha=0.4, out_index=sample.label)
    amap = sk.split_grad_map(sens, layer=0, stream="g")
    fractions, drops, aucs = sk.pixel_flipping(model, sample, amap)
    assert len(fractions) == len(drops)
    assert len(aucs) == 2 and aucs[1] >= aucs[0] - 1e-12
    assert isinstance(sk.pointing_game(amap, sample.mask), bool)
    assert sk.spearman_sanity(amap, amap) == pytest.approx(1.0)


def test_multnet_product_split():
    text = """
    {"format": "splitkit-multnet", "version": 1, "inputs": [0, 1], "output": 2,
     "neurons": [
       {"id": 0, "kind": "input"},
       {"id": 1, "kind": "input"},
       {"id": 2, "kind": "multiplication", "in": [{"from": 0, "exp": 1}, {"from": 1, "exp": 1}]}
     ]}
    """
    net = sk.multnet_from_json(text)
    pos, neg = sk.split_multnet(net)
    assert sk.classify_multnet(pos) == "input_convex"
    rng = np.random.default_rng(5)
    for _ in range(25):
        x, y = rng.uniform(-2, 2, 2)
        f = sk.eval_multnet(net, [x, y])
        assert sk.eval_multnet(pos, [x, y]) - sk.eval_multnet(neg, [x, y]) == pytest.approx(f)


def test_errors_surface_as_python_exceptions(model):
    with pytest.raises(sk.SplitkitError):
        sk.load_model("does-not-exist.json")
    with pytest.raises(sk.SplitkitError):
        sk.forward(model, np.zeros((3, 3)))
