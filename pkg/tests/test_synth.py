import numpy as np
import pytest

from avcompress import ConfigError, HyperParams, ScenarioSpec, generate_scenario
from avcompress.correspondence import cosine_matrix
from avcompress.synth import bucket_starts, choose_bucket_count


def test_single_noiseless_event_is_parallel():
    _, a, _ = generate_scenario(ScenarioSpec(noise_sigma=0.0, num_events=1, boundary_jitter=0))
    assert np.allclose(cosine_matrix(a.tokens, a.tokens), 1.0, atol=1e-6)


def test_deterministic():
    s = ScenarioSpec(seed=9)
    v1, a1, t1 = generate_scenario(s)
    v2, a2, t2 = generate_scenario(s)
    assert v1.tokens.tobytes() == v2.tokens.tobytes()
    assert a1.tokens.tobytes() == a2.tokens.tobytes()
    assert t1 == t2


@pytest.mark.parametrize("seed", range(10))
def test_boundaries_near_native(seed):
    _, _, truth = generate_scenario(ScenarioSpec(num_events=3, boundary_jitter=2, noise_sigma=0.0, seed=seed))
    for key, native in (("video", "native_video"), ("audio", "native_audio")):
        assert len(truth[key]) == 2
        for b in truth[key]:
            assert min(abs(b - n) for n in truth[native]) <= 2


def test_bucket_count_is_smallest_fit():
    assert choose_bucket_count(32, 800, HyperParams()) == 7
    assert bucket_starts(10, 3) == [4, 7]


def test_infeasible_spec_names_both_ranges():
    with pytest.raises(ConfigError, match=r"sv_min.*sa_min"):
        generate_scenario(ScenarioSpec(num_frames=4, num_audio_tokens=1000))


def test_orthogonal_latents():
    _, _, truth = generate_scenario(ScenarioSpec(num_events=4))
    assert np.allclose(truth["latent_gram"], np.eye(4), atol=1e-9)
