from __future__ import annotations

import numpy as np
import pytest

from effectfuse.domain.errors import DataValidationError
from effectfuse.services.exporters import NpzExporter
from effectfuse.services.trace_io import (
    allocation_frame,
    draws_frame,
    load_trace_arrays,
    trace_arrays,
)


def test_draws_frame_layout(small_fit):
    frame = draws_frame(small_fit.trace)
    assert list(frame.columns) == ["draw", *small_fit.trace.labels, "sigma2"]
    assert frame["draw"].tolist() == list(range(small_fit.trace.n_draws))
    np.testing.assert_array_equal(frame["sigma2"], small_fit.trace.sigma2)


def test_allocation_frame_names_levels(small_fit):
    frame = allocation_frame(small_fit.trace, "a", ("0", "1", "2", "3", "4"))
    assert list(frame.columns) == ["draw", "1", "2", "3", "4"]
    np.testing.assert_array_equal(frame.iloc[:, 1:].to_numpy(), small_fit.trace.allocations["a"])


def test_allocation_frame_falls_back_to_positions(small_fit):
    frame = allocation_frame(small_fit.trace, "b", ("only-one",))
    assert list(frame.columns) == ["draw", "level_1", "level_2"]
    with pytest.raises(DataValidationError):
        allocation_frame(small_fit.trace, "nope")


def test_trace_arrays_round_trip_through_npz(small_fit, file_service, tmp_path):
    arrays = trace_arrays(small_fit.trace)
    assert {"beta", "sigma2", "labels", "S__a", "S__b", "mu__a", "eta__b", "psi__a"} <= set(arrays)
    path = tmp_path / "trace.npz"
    NpzExporter(file_service).export(arrays, path, header={"version": "x", "seed": 3})
    back = load_trace_arrays(path)
    np.testing.assert_array_equal(back["beta"], small_fit.trace.beta)
    np.testing.assert_array_equal(back["S"]["b"], small_fit.trace.allocations["b"])
    np.testing.assert_array_equal(back["eta"]["a"], small_fit.trace.eta["a"])
    assert back["labels"].tolist() == small_fit.trace.labels
    assert int(back["burn_in"]) == 100
