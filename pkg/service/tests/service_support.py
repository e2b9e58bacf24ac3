import json

import numpy as np


def make_fixture_data(dim=8, seed=11, boost=8.0, num_frames=12, video_id="vid",
                      query="find the thing", evidence=(4, 5, 6)):
    rng = np.random.default_rng(seed)
    frames = {
        str(i): [float(x) for x in rng.normal(size=dim).astype(np.float32)]
        for i in range(num_frames)
    }
    return {
        "dim": dim,
        "seed": seed,
        "boost": boost,
        "videos": {video_id: {"frames": frames}},
        "queries": {query: [float(x) for x in rng.normal(size=dim).astype(np.float32)]},
        "evidence": {video_id: list(evidence)},
    }


