import numpy as np
import pytest

from igr import targets
from igr.errors import ConfigError
from igr.recovery import FINITE


def _built(text):
    return targets.build_target(targets.parse_target(text))


# -- reference values ---------------------------------------------------------
#
# Infinite families are truncated at cdf >= 1 - CDF_TOL and renormalized, so
# every entry is inflated by 1/(1 - tail) with tail <= 1e-10; compare with a
# relative tolerance a few times CDF_TOL.  The binomial support is exact.

@pytest.mark.parametrize(
    "text, key, rtol",
    [
        ("poisson:1", "poisson_1", 5e-10),
        ("poisson:50", "poisson_50", 5e-10),
        ("binomial:12,0.3", "binomial_12_0.3", 1e-12),
        ("negbinomial:50,0.6", "negbinomial_50_0.6", 5e-10),
    ],
)
def test_reference_pmf_values(reference, text, key, rtol):
    pmf = _built(text)
    for k_str, expected in reference[key].items():
        k = int(k_str)
        assert k < pmf.probs.size
        np.testing.assert_allclose(pmf.probs[k], expected, rtol=rtol)


def test_poisson_one_head_identity():
    pmf = _built("poisson:1")
    np.testing.assert_allclose(pmf.probs[0], np.exp(-1.0), rtol=5e-10)
    np.testing.assert_allclose(pmf.probs[1], np.exp(-1.0), rtol=5e-10)
    np.testing.assert_allclose(pmf.probs[2], np.exp(-1.0) / 2.0, rtol=5e-10)


def test_binomial_head_identity():
    pmf = _built("binomial:12,0.3")
    assert pmf.probs.size == 13
    np.testing.assert_allclose(pmf.probs[0], 0.7**12, rtol=1e-12)
    np.testing.assert_allclose(pmf.probs[12], 0.3**12, rtol=1e-12)


def test_poisson_fifty_mode_tie():
    # lambda integer => p_{lambda-1} = p_lambda exactly.
    pmf = _built("poisson:50")
    np.testing.assert_allclose(pmf.probs[49], pmf.probs[50], rtol=1e-12)
    assert pmf.probs[50] > pmf.probs[51]
    assert pmf.probs[49] > pmf.probs[48]


@pytest.mark.parametrize(
    "text",
    ["poisson:1", "poisson:50", "binomial:12,0.3", "negbinomial:50,0.6", "custom:1,2,3"],
)
def test_built_targets_normalized_finite(text):
    pmf = _built(text)
    assert pmf.kind == FINITE
    assert pmf.tail_mass == 0.0
    assert np.all(pmf.probs > 0)
    np.testing.assert_allclose(pmf.probs.sum(), 1.0, atol=1e-12)


def test_truncation_covers_target_mass():
    # The scan must run well past the mean before the cdf clears 1 - 1e-10.
    pmf = _built("poisson:50")
    assert pmf.probs.size > 90
    pmf = _built("negbinomial:50,0.6")
    # mean r(1-p)/p = 100/3
    assert pmf.probs.size > 60


def test_custom_weights_renormalized():
    pmf = _built("custom:2,1,1")
    np.testing.assert_allclose(pmf.probs, [0.5, 0.25, 0.25], atol=1e-15)


def test_label_round_trip():
    for text in ("poisson:50", "binomial:12,0.3", "negbinomial:50,0.6"):
        spec = targets.parse_target(text)
        again = targets.parse_target(spec.label())
        assert again == spec


@pytest.mark.parametrize(
    "bad",
    [
        "poisson",             # no colon
        "poisson:",            # missing parameter
        "poisson:-3",          # lambda <= 0
        "poisson:2,3",         # too many parameters
        "binomial:12.5,0.3",   # non-integer N
        "binomial:0,0.3",      # N < 1
        "binomial:12,1.0",     # p outside (0, 1)
        "negbinomial:50",      # missing p
        "negbinomial:50,0",    # p outside (0, 1)
        "custom:1",            # needs at least two weights
        "custom:1,-1",         # negative weight
        "custom:0,0",          # no mass
        "geometric:0.5",       # unknown family
        "binomial:12,zzz",     # unparseable number
    ],
)
def test_parse_rejects_malformed(bad):
    with pytest.raises(ConfigError):
        targets.parse_target(bad)
