from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from poroslip import geometry
from poroslip.errors import BadMaterial, DisconnectedSolid, EmptyPhase, GeometryError, IoError
from poroslip.geometry import FLUID, SOLID, build_phase_cell, disk_indicator, slab_indicator

from conftest import materials
from oracles import union_find_connected


def test_disk_fractions_and_labels():
    c = build_phase_cell(2, 16, disk_indicator(0.3), materials())
    fs, Pi = geometry.volume_fractions(c)
    assert fs + Pi == pytest.approx(1.0, abs=1e-15)
    assert Pi == np.count_nonzero(c.phase == FLUID) / 256
    assert c.dim == 2 and c.resolution == (16, 16)
    assert not c.phase.flags.writeable


def test_flat_phase_first_axis_fastest():
    labels = np.zeros((4, 3), dtype=np.uint8)
    labels[1, 0] = FLUID
    c = build_phase_cell(2, (4, 3), labels, materials())
    assert np.flatnonzero(c.flat_phase()).tolist() == [1]


@pytest.mark.parametrize(
    "labels, err",
    [
        (np.zeros((4, 4)), EmptyPhase),
        (np.ones((4, 4)), EmptyPhase),
        (np.full((4, 4), 2), GeometryError),
        (np.zeros((4,)), GeometryError),
    ],
)
def test_label_validation(labels, err):
    with pytest.raises(err):
        build_phase_cell(2, 4, labels.astype(np.uint8), materials())


def test_single_phase_allowed_when_requested():
    c = build_phase_cell(2, 4, np.zeros((4, 4), dtype=np.uint8), materials(), allow_single_phase=True)
    assert c.single_phase


def test_disconnected_solid_rejected():
    # two solid stripes separated by fluid stripes
    labels = np.zeros((8, 8), dtype=np.uint8)
    labels[:, 2:4] = FLUID
    labels[:, 6:8] = FLUID
    with pytest.raises(DisconnectedSolid):
        build_phase_cell(2, 8, labels, materials())


@pytest.mark.parametrize(
    "field, value, constraint",
    [
        ("rho_s", 0.0, "rho_s_positive"),
        ("rho_f", -1.0, "rho_f_positive"),
        ("mu", 0.0, "mu_positive"),
        ("eta", -0.1, "eta_over_mu"),
        ("alpha", 0.0, "alpha_positive"),
        ("c0", 0.0, "gamma_positive"),
        ("a", np.diag([1.0, 1.0, -1.0]), "a_positive_definite"),
        ("a", np.array([[2.0, 1.0, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 1.0]]), "a_symmetry"),
        ("a", np.eye(4), "a_shape"),
    ],
)
def test_material_constraints(field, value, constraint):
    bad = dataclasses.replace(materials(mu=0.1), **{field: value})
    with pytest.raises(BadMaterial) as exc:
        bad.validate()
    assert exc.value.constraint == constraint


def test_interface_of_centered_square():
    labels = np.zeros((8, 8), dtype=np.uint8)
    labels[2:6, 2:6] = FLUID
    c = build_phase_cell(2, 8, labels, materials())
    iface = geometry.extract_interface(c)
    assert iface.n_facets == 16
    assert iface.total_area == pytest.approx(16 / 8)
    # normals point from fluid into solid
    flat = c.flat_phase()
    assert np.all(flat[iface.solid] == SOLID) and np.all(flat[iface.fluid] == FLUID)
    for k in range(iface.n_facets):
        ax = iface.axis[k]
        assert iface.normal[k, ax] == (1.0 if iface.lower[k] == iface.fluid[k] else -1.0)
    # the interface of a square pore centered at the origin is symmetric
    assert np.allclose(iface.center.mean(axis=0), 0.0)


def test_interface_wraps_periodically():
    labels = np.zeros((4, 4), dtype=np.uint8)
    labels[0, :] = FLUID
    c = build_phase_cell(2, 4, labels, materials())
    iface = geometry.extract_interface(c)
    assert iface.n_facets == 8
    assert set(iface.axis.tolist()) == {0}


@pytest.mark.parametrize(
    "indicator, rank",
    [(disk_indicator(0.3), 2), (slab_indicator(1, -0.25, 0.25), 1)],
)
def test_winding_rank(indicator, rank):
    c = build_phase_cell(2, 16, indicator, materials())
    assert geometry.solid_winding_rank(c.phase) == rank


@settings(max_examples=60, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(2, 7), st.integers(2, 7)), elements=st.integers(0, 1)))
def test_connectivity_matches_union_find(labels):
    if not (labels == SOLID).any():
        return
    assert geometry.solid_is_connected(labels) == union_find_connected(labels == SOLID)


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(2, 6), st.integers(2, 6)), elements=st.integers(0, 1)))
def test_interface_count_matches_face_count(labels):
    if labels.all() or not labels.any() or not geometry.solid_is_connected(labels):
        return
    c = build_phase_cell(2, labels.shape, labels, materials())
    faces = sum(int(np.count_nonzero(labels != np.roll(labels, -1, axis=ax))) for ax in range(2))
    assert geometry.extract_interface(c).n_facets == faces


def test_geometry_json_round_trip(tmp_path):
    c = build_phase_cell(2, (6, 4), disk_indicator(0.3), materials())
    path = tmp_path / "g.json"
    path.write_text(json.dumps(geometry.geometry_to_dict(c)))
    back = geometry.read_geometry(path)
    assert np.array_equal(back.phase, c.phase)
    assert np.array_equal(back.materials.a, c.materials.a)
    assert back.materials.alpha == c.materials.alpha


def test_geometry_read_errors(tmp_path):
    with pytest.raises(IoError):
        geometry.read_geometry(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(IoError):
        geometry.read_geometry(bad)
    short = geometry.geometry_to_dict(build_phase_cell(2, 4, disk_indicator(0.3), materials()))
    short["resolution"] = [5, 5]
    with pytest.raises(IoError):
        geometry.geometry_from_dict(short)


def test_3d_cell():
    from poroslip.tensors import isotropic_voigt

    mat = dataclasses.replace(materials(), a=isotropic_voigt(1.0, 1.0, 3))
    c = build_phase_cell(3, 6, disk_indicator(0.3), mat)
    assert geometry.solid_winding_rank(c.phase) == 3
    assert geometry.extract_interface(c).area[0] == pytest.approx(1 / 36)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.uint8, st.tuples(st.integers(2, 6), st.integers(2, 6)), elements=st.integers(0, 1)),
    st.integers(0, 5),
    st.integers(0, 5),
)
def test_winding_rank_is_translation_invariant(labels, s1, s2):
    if not (labels == SOLID).any():
        return
    r = geometry.solid_winding_rank(labels)
    assert 0 <= r <= 2
    assert geometry.solid_winding_rank(np.roll(labels, (s1, s2), axis=(0, 1))) == r
