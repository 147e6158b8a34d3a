"""Reference values for the correlation tables, as (value, angle_deg).

Keyed by (damp_well, chi). Angles are the reported optimising quadrature
angles; the damp_well=2, chi=1e-3 case has no steady state and no table.
"""

REFERENCE = {
    (3, 1e-3): {
        "VX1": (5.9, 130), "VX2": (1.4, 89), "VX3": (4.8, 53),
        "DS12": (16.1, 122), "DS13": (40.1, 98), "DS23": (14.0, 93),
        "EPR12": (33.2, 127), "EPR21": (1.4, 38), "EPR23": (1.8, 88),
        "EPR32": (18.5, 58), "EPR13": (6.6, 124), "EPR31": (4.9, 58),
        "V12": (14.4, 118), "V13": (39.9, 98), "V23": (13.2, 62),
        "V123": (31.0, 102), "V231": (8.4, 96), "V312": (33.0, 87),
        "OBR123": (10.3, 124), "OBR231": (1.8, 84), "OBR312": (6.0, 60),
    },
    (3, 1e-2): {
        "VX1": (0.6, 116), "VX2": (0.6, 151), "VX3": (0.7, 31),
        "DS12": (3.1, 135), "DS13": (5.7, 93), "DS23": (4.0, 176),
        "EPR12": (0.4, 118), "EPR21": (0.4, 150), "EPR23": (0.4, 153),
        "EPR32": (0.5, 29), "EPR13": (0.5, 31), "EPR31": (0.4, 116),
        "V12": (2.9, 135), "V13": (5.2, 82), "V23": (4.2, 176),
        "V123": (4.3, 145), "V231": (3.9, 151), "V312": (4.9, 153),
        "OBR123": (0.39, 118), "OBR231": (0.35, 153), "OBR312": (0.50, 31),
    },
    (2, 1e-2): {
        "VX1": (5.8, 127), "VX2": (1.4, 87), "VX3": (4.8, 53),
        "DS12": (16.6, 122), "DS13": (40.2, 98), "DS23": (14.0, 58),
        "EPR12": (33.3, 127), "EPR21": (1.4, 78), "EPR23": (1.8, 80),
        "EPR32": (18.3, 58), "EPR13": (6.7, 124), "EPR31": (4.9, 58),
        "V12": (14.5, 118), "V13": (40.0, 98), "V23": (13.2, 62),
        "V123": (30.8, 102), "V231": (8.4, 95), "V312": (33.0, 87),
        "OBR123": (10.4, 124), "OBR231": (1.7, 84), "OBR312": (5.9, 60),
    },
    (1, 1e-3): {
        "VX1": (0.8, 2), "VX2": (0.7, 93), "VX3": (0.66, 7),
        "DS12": (4.2, 95), "DS13": (2.9, 5), "DS23": (4.5, 44),
        "EPR12": (0.65, 4), "EPR21": (0.48, 93), "EPR23": (0.48, 93),
        "EPR32": (0.44, 7), "EPR13": (0.65, 2), "EPR31": (0.44, 7),
        "V12": (4.2, 95), "V13": (2.9, 5), "V23": (4.4, 42),
        "V123": (3.7, 18), "V231": (4.4, 85), "V312": (3.8, 175),
        "OBR123": (0.65, 4), "OBR231": (0.48, 93), "OBR312": (0.44, 7),
    },
    (1, 1e-2): {
        "VX1": (0.68, 164), "VX2": (0.66, 155), "VX3": (0.76, 153),
        "DS12": (2.8, 158), "DS13": (3.0, 156), "DS23": (2.8, 153),
        "EPR12": (0.46, 164), "EPR21": (0.43, 155), "EPR23": (0.43, 155),
        "EPR32": (0.57, 153), "EPR13": (0.47, 164), "EPR31": (0.58, 153),
        "V12": (2.8, 156), "V13": (2.8, 156), "V23": (3.0, 153),
        "V123": (2.8, 39), "V231": (2.8, 156), "V312": (2.8, 156),
        "OBR123": (0.46, 164), "OBR231": (0.43, 155), "OBR312": (0.57, 153),
    },
}

TABLE_KINDS = ("bipartite", "epr", "tripartite", "obr")


def table_ids() -> list[str]:
    return [f"{kind}-loss{d}" for d in (3, 2, 1) for kind in TABLE_KINDS]


def parse_table_id(table_id: str) -> tuple[str, int]:
    try:
        kind, loss = table_id.split("-")
        d = int(loss.removeprefix("loss"))
    except ValueError:
        raise KeyError(table_id) from None
    if kind not in TABLE_KINDS or d not in (1, 2, 3):
        raise KeyError(table_id)
    return kind, d


def rows_for(damp_well: int) -> list[float]:
    """Nonlinearities with a reference row for this damped well."""
    return [chi for (d, chi) in REFERENCE if d == damp_well]
