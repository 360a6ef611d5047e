import numpy as np

from smoothlin import chain_io, dynamics
from smoothlin.contraction import CascadeParams, linearize_contraction
from smoothlin.grids import Box
from smoothlin.transforms import LinearTransform, TransformChain


def test_cascade_chain_roundtrip_with_poly_graphs(tmp_path):
    # the planar cascade chain contains a band transform whose
    # straightening carries polynomial graphs
    model = dynamics.MapModel.from_polynomial(
        2, [(0.2, (1, 0), 0), (1.0, (0, 2), 0), (0.5, (0, 1), 1)],
        box=Box.cube(0.3, 2))
    res = linearize_contraction(model, CascadeParams(resolution=17,
                                                     working_radius=0.02))
    chain_io.save_chain(res.chain, str(tmp_path / "chain"))
    loaded = chain_io.load_chain(str(tmp_path / "chain"))
    rng = np.random.default_rng(0)
    pts = Box.cube(0.02, 2).sample(200, rng)
    assert np.array_equal(loaded.forward(pts), res.chain.forward(pts))
    assert np.max(np.abs(loaded.inverse(res.chain.forward(pts)) - pts)) \
        < 1e-9


def test_linear_transform_roundtrip(tmp_path):
    rot = np.array([[0.8, -0.6], [0.6, 0.8]])
    chain = TransformChain([LinearTransform(rot, label="basis")], 2)
    chain_io.save_chain(chain, str(tmp_path / "chain"))
    loaded = chain_io.load_chain(str(tmp_path / "chain"))
    pts = np.array([[0.1, -0.2], [0.0, 0.3]])
    assert np.array_equal(loaded.forward(pts), pts @ rot.T)
    assert loaded.transforms[0].label == "basis"
