"""Shared fixtures: one fast five-controller experiment.

The y-axis cost weights are overridden with quickly converging ones so
the offline synthesis finishes in a couple of seconds; the stock y
weights produce a low-gain law whose invariant set takes minutes to
settle and is exercised only by the acceptance suite.
"""

import os

import pytest

from ictrack.harness import ExperimentConfig, build_designs, run_experiment

FAST_WEIGHT_OVERRIDES = {
    "y": {
        "q_high": [0.64, 0.04], "r_high": [0.04],
        "q_mid": [0.64, 0.04], "r_mid": [0.1],
        "q_low": [0.64, 0.04], "r_low": [0.4],
    },
}

FAST_CONFIG_INI = """\
[experiment]
controllers = lqr, ic, eic, mpc, mpcmb
kind = lemniscate
a_y = 0.3
a_z = 0.2
omega = 0.6
duration = 0.5
preview = 40

[weights_y]
q_high = 0.64, 0.04
r_high = 0.04
q_mid = 0.64, 0.04
r_mid = 0.1
q_low = 0.64, 0.04
r_low = 0.4
"""


def make_fast_config(out_dir,
                     controllers=("lqr", "ic", "eic", "mpc", "mpcmb"),
                     **kwargs):
    overrides = {axis: dict(entry)
                 for axis, entry in FAST_WEIGHT_OVERRIDES.items()}
    return ExperimentConfig(controllers=tuple(controllers), a_y=0.3,
                            a_z=0.2, duration=0.5, preview=40,
                            out_dir=str(out_dir),
                            weight_overrides=overrides, **kwargs)


@pytest.fixture(scope="session")
def fast_out_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("fast-results")


@pytest.fixture(scope="session")
def fast_config(fast_out_dir):
    return make_fast_config(fast_out_dir)


@pytest.fixture(scope="session")
def fast_report(fast_config):
    return run_experiment(fast_config)


@pytest.fixture(scope="session")
def fast_bundle(fast_config, fast_report):
    # fast_report has warmed the cache, so this is a pure load
    cache_dir = os.path.join(fast_config.out_dir, "design_cache")
    return build_designs(fast_config, cache_dir=cache_dir)


@pytest.fixture(scope="session")
def fast_config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "experiment.ini"
    path.write_text(FAST_CONFIG_INI)
    return path
