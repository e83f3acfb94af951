"""Tiny configurations shared by the training and CLI tests."""

TINY = {
    "model": {"frames": 2, "slots": 4, "width": 8, "heads": 2, "layers": 1, "patch": 8, "image_size": 16},
    "optim": {"lr": 0.001},
    "schedule": {"iterations": 3, "decay_step": 2, "log_every": 2},
    "data": {"seed": 1, "clips": 10, "categories": 4, "styles": ["realistic", "abstract"],
             "clip_frames": 4, "image_size": 16, "max_objects": 2, "sketches_per_category": [2, 1]},
    "batch_size": 2,
    "seed": 0,
}


def tiny(**sections):
    import copy

    d = copy.deepcopy(TINY)
    for key, value in sections.items():
        if isinstance(value, dict):
            d.setdefault(key, {}).update(value)
        else:
            d[key] = value
    return d
