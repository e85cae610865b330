"""Tests for the structlog configuration and run context."""

import json

import numpy as np
import structlog
from structlog.contextvars import get_contextvars, merge_contextvars
from structlog.testing import capture_logs

from superpose.config.logging import _plain_values, bind_run, fit_stage, get_logger


class TestRunContext:
    def teardown_method(self):
        structlog.contextvars.clear_contextvars()

    def test_bind_run_drops_unset_values(self):
        bind_run("calibrate", stage="stale")
        bind_run("fit", seed=3, out=None)
        assert get_contextvars() == {"command": "fit", "seed": 3}

    def test_fit_stage_is_scoped(self):
        bind_run("fit", seed=3)
        with fit_stage("preliminary", np.int64(12)):
            event = merge_contextvars(None, "info", {"event": "generation", "best_chi2": 4.0})
            assert event["stage"] == "preliminary"
            assert event["n_sources"] == 12 and type(event["n_sources"]) is int
            assert event["command"] == "fit"
        assert get_contextvars() == {"command": "fit", "seed": 3}

    def test_event_fields_override_context(self):
        with fit_stage("final", 40):
            event = merge_contextvars(None, "info", {"event": "fit_finished", "n_sources": 41})
        assert event["n_sources"] == 41


class TestProcessors:
    def test_numpy_values_become_plain(self):
        event = _plain_values(
            None,
            "info",
            {"event": "irf_fitted", "d0": np.float64(1.5), "records": np.int64(3), "shift": np.array([0.25])},
        )
        assert json.dumps(event) == '{"event": "irf_fitted", "d0": 1.5, "records": 3, "shift": [0.25]}'

    def test_component_names_module(self):
        with capture_logs() as logs:
            get_logger("superpose.selection.bounds").info("bounds_estimated", n_op=4.2)
        assert logs[0]["component"] == "selection.bounds"
        assert logs[0]["event"] == "bounds_estimated"
