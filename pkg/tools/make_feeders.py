"""Generate the feeder JSON files shipped in src/svropf/feeders.

Run from the repository root: ``python3 tools/make_feeders.py``.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "svropf" / "feeders"


def pair(z):
    return [round(float(np.real(z)), 12), round(float(np.imag(z)), 12)]


def pvec(v):
    return [pair(z) for z in v]


def pmat(m):
    return [[pair(z) for z in row] for row in m]


def balanced(mag=1.0, phases="abc"):
    ang = {"a": 0.0, "b": -120.0, "c": 120.0}
    return [mag * np.exp(1j * np.radians(ang[p])) for p in phases]


# ------------------------------------------------------------------ tiny 4-bus feeders

def tiny4(svr_type: str) -> dict:
    """Path 0 -line- 1 -SVR- 2 -line- 3 with unbalanced constant-power loads."""
    zs, zm = 0.012 + 0.036j, 0.004 + 0.014j
    z = np.full((3, 3), zm) + np.eye(3) * (zs - zm)
    load1 = np.array([0.30 + 0.12j, 0.25 + 0.10j, 0.35 + 0.15j])
    load3 = np.array([0.55 + 0.22j, 0.45 + 0.18j, 0.60 + 0.25j])
    return {
        "name": f"tiny4_{svr_type}",
        "limits": {"v_min": 0.9, "v_max": 1.1},
        "slack": {"bus": 0, "voltage_phasors": pvec(balanced())},
        "buses": [
            {"id": 0, "phases": "abc"},
            {"id": 1, "phases": "abc", "load_s": pvec(load1)},
            {"id": 2, "phases": "abc"},
            {"id": 3, "phases": "abc", "load_s": pvec(load3)},
        ],
        "lines": [
            {"from": 0, "to": 1, "z_matrix": pmat(z), "units": "pu"},
            {"from": 2, "to": 3, "z_matrix": pmat(2.0 * z), "units": "pu"},
        ],
        "svrs": [
            {"from": 1, "to": 2, "type": svr_type, "variant": "A", "gang": False,
             "delta_deg": {"wye": 5.0, "closed_delta": 5.0, "open_delta": 10.0}[svr_type]},
        ],
    }


# ------------------------------------------------------------------ IEEE 13-node feeder

# Series impedance matrices in ohm/mile (line shunt admittances are ignored).
CONFIG_13 = {
    "601": ("abc", [[0.3465 + 1.0179j, 0.1560 + 0.5017j, 0.1580 + 0.4236j],
                    [0.1560 + 0.5017j, 0.3375 + 1.0478j, 0.1535 + 0.3849j],
                    [0.1580 + 0.4236j, 0.1535 + 0.3849j, 0.3414 + 1.0348j]]),
    "602": ("abc", [[0.7526 + 1.1814j, 0.1580 + 0.4236j, 0.1560 + 0.5017j],
                    [0.1580 + 0.4236j, 0.7475 + 1.1983j, 0.1535 + 0.3849j],
                    [0.1560 + 0.5017j, 0.1535 + 0.3849j, 0.7436 + 1.2112j]]),
    "603": ("bc", [[1.3294 + 1.3471j, 0.2066 + 0.4591j],
                   [0.2066 + 0.4591j, 1.3238 + 1.3569j]]),
    "604": ("ac", [[1.3238 + 1.3569j, 0.2066 + 0.4591j],
                   [0.2066 + 0.4591j, 1.3294 + 1.3471j]]),
    "605": ("c", [[1.3292 + 1.3475j]]),
    "606": ("abc", [[0.7982 + 0.4463j, 0.3192 + 0.0328j, 0.2849 - 0.0143j],
                    [0.3192 + 0.0328j, 0.7891 + 0.4041j, 0.3192 + 0.0328j],
                    [0.2849 - 0.0143j, 0.3192 + 0.0328j, 0.7982 + 0.4463j]]),
    "607": ("a", [[1.3425 + 0.5124j]]),
}

# (from, to, feet, config); the distributed load on 632-671 is lumped at a
# node 670 one third of the way along the segment.
SEGMENTS_13 = [
    ("rg60", "632", 2000, "601"),
    ("632", "670", 667, "601"),
    ("670", "671", 1333, "601"),
    ("632", "633", 500, "602"),
    ("632", "645", 500, "603"),
    ("645", "646", 300, "603"),
    ("671", "680", 1000, "601"),
    ("671", "684", 300, "604"),
    ("684", "611", 300, "605"),
    ("684", "652", 800, "607"),
    ("692", "675", 500, "606"),
]

# wye spot loads (kW, kvar) per phase; Z and I loads are treated as constant power
WYE_LOADS_13 = {
    "634": {"a": (160, 110), "b": (120, 90), "c": (120, 90)},
    "645": {"b": (170, 125)},
    "652": {"a": (128, 86)},
    "675": {"a": (485, 190), "b": (68, 60), "c": (290, 212)},
    "611": {"c": (170, 80)},
    "670": {"a": (17, 10), "b": (66, 38), "c": (117, 68)},
}
# delta loads (kW, kvar) per phase pair; each is split evenly over its two phases
DELTA_LOADS_13 = {
    "646": {"bc": (230, 132)},
    "671": {"ab": (385, 220), "bc": (385, 220), "ca": (385, 220)},
    "692": {"ca": (170, 151)},
}
CAPS_13 = {"675": {"a": 200, "b": 200, "c": 200}, "611": {"c": 100}}  # kvar


def ieee13() -> dict:
    s_base = 5000.0  # kVA, per-phase quantities
    v_mv = 4.16 / np.sqrt(3)
    v_lv = 0.48 / np.sqrt(3)
    phases = {
        "650": "abc", "rg60": "abc", "632": "abc", "670": "abc", "633": "abc", "645": "bc",
        "671": "abc", "634": "abc", "646": "bc", "680": "abc", "684": "ac", "692": "abc",
        "611": "c", "652": "a", "675": "abc",
    }
    order = ["650", "rg60", "632", "670", "633", "645", "671", "634", "646", "680", "684",
             "692", "611", "652", "675"]
    ids = {name: k for k, name in enumerate(order)}

    loads = {name: {p: 0j for p in phases[name]} for name in order}
    for name, per in WYE_LOADS_13.items():
        for p, (kw, kvar) in per.items():
            loads[name][p] += complex(kw, kvar)
    for name, per in DELTA_LOADS_13.items():
        for pp, (kw, kvar) in per.items():
            for p in pp:
                loads[name][p] += 0.5 * complex(kw, kvar)

    buses = []
    for name in order:
        region = "lv" if name == "634" else "mv"
        b = {"id": ids[name], "name": name, "phases": phases[name], "region": region, "units": "si"}
        if any(abs(x) > 0 for x in loads[name].values()):
            b["load_s"] = pvec([loads[name][p] for p in phases[name]])
        if name in CAPS_13:
            v = (v_lv if region == "lv" else v_mv) * 1e3
            y = np.zeros((len(phases[name]),) * 2, complex)
            for p, kvar in CAPS_13[name].items():
                k = phases[name].index(p)
                y[k, k] = 1j * kvar * 1e3 / v**2
            b["shunt_y"] = pmat(y)
        buses.append(b)

    lines = []
    for a, b, feet, cfg in SEGMENTS_13:
        ph, z = CONFIG_13[cfg]
        z = np.array(z) * feet / 5280.0
        lines.append({"from": ids[a], "to": ids[b], "phases": ph, "units": "ohm",
                      "z_matrix": pmat(z), "name": f"{a}-{b}"})
    # XFM-1: 500 kVA, 4.16-0.48 kV grounded wye, R=1.1 %, X=2 % on its own rating
    z_xfm = (0.011 + 0.02j) * s_base / (500.0 / 3)
    lines.append({"from": ids["633"], "to": ids["634"], "units": "pu",
                  "z_matrix": pmat(np.eye(3) * z_xfm), "name": "XFM-1"})

    return {
        "name": "ieee13",
        "base": {"s_base_kva": s_base, "v_base_kv_per_region": {"mv": v_mv, "lv": v_lv}},
        "limits": {"v_min": 0.9, "v_max": 1.1},
        "slack": {"bus": 0, "voltage_phasors": pvec(balanced())},
        "buses": buses,
        "lines": lines,
        "switches": [{"from": ids["671"], "to": ids["692"], "name": "671-692"}],
        "svrs": [{"from": ids["650"], "to": ids["rg60"], "type": "wye", "variant": "A",
                  "gang": False, "delta_deg": 5.0, "name": "650-rg60"}],
    }


# ------------------------------------------------------------------ IEEE 37-node feeder

CONFIG_37 = {
    "721": [[0.2926 + 0.1973j, 0.0673 - 0.0368j, 0.0337 - 0.0417j],
            [0.0673 - 0.0368j, 0.2646 + 0.1900j, 0.0673 - 0.0368j],
            [0.0337 - 0.0417j, 0.0673 - 0.0368j, 0.2926 + 0.1973j]],
    "722": [[0.4751 + 0.2973j, 0.1629 - 0.0326j, 0.1234 - 0.0607j],
            [0.1629 - 0.0326j, 0.4488 + 0.2678j, 0.1629 - 0.0326j],
            [0.1234 - 0.0607j, 0.1629 - 0.0326j, 0.4751 + 0.2973j]],
    "723": [[1.2936 + 0.6713j, 0.4871 + 0.2111j, 0.4585 + 0.1521j],
            [0.4871 + 0.2111j, 1.3022 + 0.6326j, 0.4871 + 0.2111j],
            [0.4585 + 0.1521j, 0.4871 + 0.2111j, 1.2936 + 0.6713j]],
    "724": [[2.0952 + 0.7758j, 0.5204 + 0.2738j, 0.4926 + 0.2123j],
            [0.5204 + 0.2738j, 2.1068 + 0.7398j, 0.5204 + 0.2738j],
            [0.4926 + 0.2123j, 0.5204 + 0.2738j, 2.0952 + 0.7758j]],
}

SEGMENTS_37 = [
    ("799r", "701", 1850, "721"),
    ("701", "702", 960, "722"),
    ("702", "705", 400, "724"),
    ("702", "713", 360, "723"),
    ("702", "703", 1320, "722"),
    ("703", "727", 240, "724"),
    ("703", "730", 600, "723"),
    ("704", "714", 80, "724"),
    ("704", "720", 800, "723"),
    ("705", "742", 320, "724"),
    ("705", "712", 240, "724"),
    ("706", "725", 280, "724"),
    ("707", "724", 760, "724"),
    ("707", "722", 120, "724"),
    ("708", "733", 320, "723"),
    ("708", "732", 320, "724"),
    ("709", "731", 600, "723"),
    ("709", "708", 320, "723"),
    ("710", "735", 200, "724"),
    ("710", "736", 1280, "724"),
    ("711", "741", 400, "723"),
    ("711", "740", 200, "724"),
    ("713", "704", 520, "723"),
    ("714", "718", 520, "724"),
    ("720", "707", 920, "724"),
    ("720", "706", 600, "723"),
    ("727", "744", 280, "723"),
    ("730", "709", 200, "723"),
    ("733", "734", 560, "723"),
    ("734", "737", 640, "723"),
    ("734", "710", 520, "724"),
    ("737", "738", 400, "723"),
    ("738", "711", 400, "723"),
    ("744", "728", 200, "724"),
    ("744", "729", 280, "724"),
]

# delta loads (kW, kvar) on phase pairs ab, bc, ca; all treated as constant power
LOADS_37 = {
    "701": [(140, 70), (140, 70), (350, 175)],
    "712": [(0, 0), (0, 0), (85, 40)],
    "713": [(0, 0), (0, 0), (85, 40)],
    "714": [(17, 8), (21, 10), (0, 0)],
    "718": [(85, 40), (0, 0), (0, 0)],
    "720": [(0, 0), (0, 0), (85, 40)],
    "722": [(0, 0), (140, 70), (21, 10)],
    "724": [(0, 0), (42, 21), (0, 0)],
    "725": [(0, 0), (42, 21), (0, 0)],
    "727": [(0, 0), (0, 0), (42, 21)],
    "728": [(42, 21), (42, 21), (42, 21)],
    "729": [(42, 21), (0, 0), (0, 0)],
    "730": [(0, 0), (0, 0), (85, 40)],
    "731": [(0, 0), (85, 40), (0, 0)],
    "732": [(0, 0), (0, 0), (42, 21)],
    "733": [(85, 40), (0, 0), (0, 0)],
    "734": [(0, 0), (0, 0), (42, 21)],
    "735": [(0, 0), (0, 0), (85, 40)],
    "736": [(0, 0), (42, 21), (0, 0)],
    "737": [(140, 70), (0, 0), (0, 0)],
    "738": [(126, 62), (0, 0), (0, 0)],
    "740": [(0, 0), (0, 0), (85, 40)],
    "741": [(0, 0), (0, 0), (42, 21)],
    "742": [(8, 4), (85, 40), (0, 0)],
    "744": [(42, 21), (0, 0), (0, 0)],
}


def ieee37() -> dict:
    s_base = 2500.0
    v_ln = 4.8 / np.sqrt(3)
    # breadth-first numbering from the substation source
    children: dict[str, list[str]] = {}
    for a, b, _, _ in SEGMENTS_37:
        children.setdefault(a, []).append(b)
    children["709"].append("775")
    order = ["source", "799", "799r"]
    k = 2
    while k < len(order):
        order.extend(sorted(children.get(order[k], [])))
        k += 1
    ids = {name: i for i, name in enumerate(order)}

    buses = []
    for name in order:
        b = {"id": ids[name], "name": name, "phases": "abc", "region": "mv", "units": "si"}
        if name in LOADS_37:
            s = np.zeros(3, complex)
            for (i, j), (kw, kvar) in zip([(0, 1), (1, 2), (2, 0)], LOADS_37[name]):
                s[i] += 0.5 * complex(kw, kvar)
                s[j] += 0.5 * complex(kw, kvar)
            b["load_s"] = pvec(s)
        buses.append(b)

    # substation transformer: 2500 kVA three-phase, R=2 %, X=8 % on its own rating
    z_sub = (0.02 + 0.08j) * s_base / (2500.0 / 3)
    lines = [{"from": ids["source"], "to": ids["799"], "units": "pu",
              "z_matrix": pmat(np.eye(3) * z_sub), "name": "substation"}]
    for a, b, feet, cfg in SEGMENTS_37:
        z = np.array(CONFIG_37[cfg]) * feet / 5280.0
        i, j = sorted((ids[a], ids[b]))
        lines.append({"from": i, "to": j, "units": "ohm", "z_matrix": pmat(z), "name": f"{a}-{b}"})
    # XFM-1 (500 kVA, 4.8-0.48 kV, R=0.09 %, X=1.81 %) feeds no load; bus 775 is kept on the
    # medium-voltage base
    z_xfm = (0.0009 + 0.0181j) * s_base / (500.0 / 3)
    lines.append({"from": ids["709"], "to": ids["775"], "units": "pu",
                  "z_matrix": pmat(np.eye(3) * z_xfm), "name": "XFM-1"})

    return {
        "name": "ieee37",
        "base": {"s_base_kva": s_base, "v_base_kv_per_region": {"mv": v_ln}},
        "limits": {"v_min": 0.9, "v_max": 1.1},
        "slack": {"bus": 0, "voltage_phasors": pvec(balanced())},
        "buses": buses,
        "lines": lines,
        "svrs": [{"from": ids["799"], "to": ids["799r"], "type": "wye", "variant": "A",
                  "gang": False, "delta_deg": 5.0, "name": "799-799r"}],
    }


def write(doc: dict, name: str):
    OUT.mkdir(parents=True, exist_ok=True)
    path = OUT / f"{name}.json"
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    print("wrote", path)


def main():
    for t, short in (("wye", "wye"), ("closed_delta", "cdelta"), ("open_delta", "odelta")):
        write(tiny4(t), f"tiny4_{short}")
    write(ieee13(), "ieee13")
    write(ieee37(), "ieee37")


if __name__ == "__main__":
    main()
