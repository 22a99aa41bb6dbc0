import pytest

import starstream as ss


@pytest.fixture(scope="session")
def small_video():
    """60 s synthetic video across the full bitrate ladder at (15, 720p)."""
    return ss.gen_synthetic_video_trace(seed=7, duration_s=60)


@pytest.fixture(scope="session")
def small_profile(small_video):
    return ss.build_profile(small_video)


@pytest.fixture(scope="session")
def full_grid_video():
    """60 s video over the full (fps, resolution) grid, for pruning tests."""
    configs = [
        ss.EncodingConfig(b, f, r)
        for b in ss.BITRATE_CANDIDATES_MBPS
        for f in ss.FRAME_RATE_CANDIDATES
        for r in ss.RESOLUTION_CANDIDATES
    ]
    return ss.gen_synthetic_video_trace(
        seed=13, duration_s=60, config_set=configs, gop_set=(1, 2, 3)
    )


@pytest.fixture(scope="session")
def steady_trace():
    """600 s constant-capacity trace (9 Mbps) with mild noise."""
    params = ss.SyntheticNetworkParams(
        level_schedule=((0, 9.0),), noise_sigma=0.3
    )
    return ss.gen_synthetic_network_trace(
        seed=21, duration_s=600, params=params, trace_id="steady-9"
    )
