"""Published FairSeq dense-model accuracies, zero- and five-shot.

Each row maps a task to accuracies for the 125M, 355M, 1.3B, 2.7B, 6.7B and
13B models, in that order. The zero-shot language-understanding table has one
task (PROST) with no five-shot counterpart.
"""

from __future__ import annotations

from .evaluation import EvalResult, FewshotDelta, fewshot_delta

FAIRSEQ_SIZES = ("125M", "355M", "1.3B", "2.7B", "6.7B", "13B")

NLU_ZERO = {
    'ANLI Round 1': (0.316, 0.322, 0.331, 0.318, 0.338, 0.340),
    'ANLI Round 2': (0.336, 0.312, 0.334, 0.339, 0.322, 0.330),
    'ANLI Round 3': (0.330, 0.323, 0.333, 0.340, 0.333, 0.347),
    'LAMBADA': (0.388, 0.478, 0.562, 0.632, 0.673, 0.709),
    'WSC': (0.365, 0.471, 0.365, 0.635, 0.615, 0.577),
    'HellaSwag': (0.309, 0.380, 0.448, 0.493, 0.525, 0.554),
    'Winogrande': (0.513, 0.529, 0.600, 0.620, 0.644, 0.674),
    'SciQ': (0.732, 0.737, 0.838, 0.878, 0.895, 0.910),
    'PIQA': (0.668, 0.690, 0.731, 0.751, 0.762, 0.769),
    'TriviaQA': (0.015, 0.019, 0.078, 0.141, 0.221, 0.270),
    'ARC (Easy)': (0.426, 0.468, 0.565, 0.625, 0.665, 0.680),
    'ARC (Challenge)': (0.195, 0.233, 0.263, 0.296, 0.329, 0.345),
    'OpenBookQA': (0.168, 0.190, 0.238, 0.254, 0.292, 0.296),
    'HeadQA (English)': (0.233, 0.233, 0.256, 0.264, 0.280, 0.280),
    'LogiQA': (0.220, 0.230, 0.214, 0.212, 0.232, 0.240),
    'PROST': (0.215, 0.257, 0.257, 0.230, 0.272, 0.252),
    'QA4MRE (2013)': (0.285, 0.335, 0.327, 0.380, 0.370, 0.380),
}

NLU_FIVE = {
    'ANLI Round 1': (0.332, 0.336, 0.327, 0.336, 0.305, 0.335),
    'ANLI Round 2': (0.345, 0.350, 0.347, 0.333, 0.340, 0.338),
    'ANLI Round 3': (0.359, 0.347, 0.370, 0.326, 0.367, 0.357),
    'LAMBADA': (0.268, 0.349, 0.427, 0.460, 0.494, 0.518),
    'WSC': (0.365, 0.365, 0.365, 0.356, 0.500, 0.404),
    'HellaSwag': (0.308, 0.379, 0.451, 0.497, 0.531, 0.559),
    'Winogrande': (0.516, 0.538, 0.612, 0.633, 0.657, 0.690),
    'SciQ': (0.758, 0.819, 0.859, 0.875, 0.871, 0.899),
    'PIQA': (0.656, 0.700, 0.731, 0.750, 0.764, 0.769),
    'TriviaQA': (0.044, 0.097, 0.160, 0.225, 0.293, 0.323),
    'ARC (Easy)': (0.453, 0.533, 0.618, 0.664, 0.686, 0.702),
    'ARC (Challenge)': (0.198, 0.231, 0.278, 0.310, 0.359, 0.370),
    'OpenBookQA': (0.184, 0.206, 0.218, 0.258, 0.288, 0.290),
    'HeadQA (English)': (0.235, 0.240, 0.254, 0.266, 0.276, 0.282),
    'LogiQA': (0.218, 0.207, 0.210, 0.214, 0.214, 0.223),
    'QA4MRE (2013)': (0.324, 0.338, 0.338, 0.352, 0.391, 0.387),
}

MATH_ZERO = {
    '1DC': (0.001, 0.000, 0.000, 0.011, 0.024, 0.001),
    '2D+': (0.005, 0.001, 0.002, 0.009, 0.019, 0.020),
    '2Dx': (0.020, 0.004, 0.018, 0.023, 0.036, 0.028),
    '2D-': (0.005, 0.002, 0.006, 0.013, 0.013, 0.015),
    '3D+': (0.001, 0.001, 0.001, 0.001, 0.001, 0.001),
    '3D-': (0.002, 0.001, 0.002, 0.002, 0.002, 0.002),
    '4D+': (0.001, 0.000, 0.001, 0.001, 0.001, 0.001),
    '4D-': (0.000, 0.000, 0.000, 0.000, 0.000, 0.000),
    '5D+': (0.000, 0.000, 0.000, 0.000, 0.000, 0.000),
    '5D-': (0.000, 0.000, 0.000, 0.000, 0.000, 0.000),
    'MATH (Algebra)': (0.000, 0.000, 0.001, 0.003, 0.004, 0.003),
    'MATH (Counting and Probability)': (0.000, 0.000, 0.000, 0.000, 0.004, 0.000),
    'MATH (Geometry)': (0.000, 0.000, 0.000, 0.002, 0.000, 0.000),
    'MATH (Intermediate Algebra)': (0.000, 0.000, 0.000, 0.001, 0.006, 0.002),
    'MATH (Number Theory)': (0.000, 0.000, 0.000, 0.002, 0.000, 0.004),
    'MATH (Pre-Algebra)': (0.000, 0.000, 0.003, 0.002, 0.001, 0.000),
    'MATH (Pre-Calculus)': (0.000, 0.000, 0.000, 0.002, 0.000, 0.000),
}

MATH_FIVE = {
    '1DC': (0.019, 0.024, 0.029, 0.032, 0.046, 0.046),
    '2D+': (0.005, 0.004, 0.006, 0.029, 0.034, 0.051),
    '2Dx': (0.001, 0.025, 0.025, 0.025, 0.049, 0.053),
    '2D-': (0.007, 0.011, 0.008, 0.013, 0.018, 0.030),
    '3D+': (0.002, 0.002, 0.001, 0.003, 0.001, 0.003),
    '3D-': (0.002, 0.004, 0.003, 0.003, 0.002, 0.003),
    '4D+': (0.000, 0.000, 0.000, 0.000, 0.000, 0.000),
    '4D-': (0.001, 0.000, 0.000, 0.001, 0.000, 0.000),
    '5D+': (0.000, 0.000, 0.000, 0.000, 0.000, 0.000),
    '5D-': (0.000, 0.000, 0.000, 0.000, 0.000, 0.000),
    'MATH (Algebra)': (0.023, 0.010, 0.013, 0.014, 0.017, 0.012),
    'MATH (Counting and Probability)': (0.008, 0.004, 0.015, 0.017, 0.015, 0.017),
    'MATH (Geometry)': (0.000, 0.013, 0.006, 0.015, 0.015, 0.006),
    'MATH (Intermediate Algebra)': (0.010, 0.002, 0.007, 0.010, 0.011, 0.004),
    'MATH (Number Theory)': (0.019, 0.009, 0.007, 0.011, 0.028, 0.019),
    'MATH (Pre-Algebra)': (0.013, 0.008, 0.010, 0.011, 0.021, 0.013),
    'MATH (Pre-Calculus)': (0.002, 0.002, 0.004, 0.000, 0.002, 0.000),
}


def results(table: dict, size: str, k: int, tasks=None) -> list[EvalResult]:
    """Rows of ``table`` for one model size as results (item counts unknown)."""
    col = FAIRSEQ_SIZES.index(size)
    names = list(table) if tasks is None else list(tasks)
    return [EvalResult(name, k, None, table[name][col], 0.0) for name in names]


def shared_tasks(zero: dict, five: dict) -> list[str]:
    return [name for name in zero if name in five]


def fairseq_nlu_delta(size: str = "13B") -> FewshotDelta:
    """Five-shot minus zero-shot mean over the language-understanding tasks
    present in both tables."""
    tasks = shared_tasks(NLU_ZERO, NLU_FIVE)
    return fewshot_delta(
        results(NLU_ZERO, size, 0, tasks), results(NLU_FIVE, size, 5, tasks)
    )
