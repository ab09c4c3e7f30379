"""Published per-emotion FAD / HEEP / S_GEN scores, two systems, three decimals."""

EMOTIONS = ("amusement", "awe", "awkwardness", "distress", "excitement", "fear", "horror", "sadness", "surprise")

LOWER_BOUND_FAD = (0.634, 0.776, 1.20, 0.866, 0.697, 0.649, 1.25, 0.992, 0.341)

SYSTEMS = {
    "proposed": {
        "fad": (1.28, 1.76, 1.76, 1.77, 1.75, 1.57, 1.34, 0.94, 1.67),
        "heep": (0.707, 0.455, 0.312, 0.372, 0.212, 0.229, 0.205, 0.359, 0.599),
        "s_gen": (0.744, 0.512, 0.440, 0.467, 0.392, 0.433, 0.476, 0.711, 0.598),
    },
    "baseline": {
        "fad": (4.92, 4.81, 8.27, 6.11, 6.00, 5.71, 5.64, 5.00, 6.08),
        "heep": (0.490, 0.46, 0.036, 0.32, 0.084, 0.042, 0.27, -0.033, 0.22),
        "s_gen": (0.347, 0.334, 0.078, 0.242, 0.125, 0.109, 0.224, 0.084, 0.192),
    },
}


def rows():
    """Yield ``(system, emotion, fad, heep, printed_s_gen)`` for all 18 entries."""
    for system, cols in SYSTEMS.items():
        for i, emotion in enumerate(EMOTIONS):
            yield system, emotion, cols["fad"][i], cols["heep"][i], cols["s_gen"][i]
