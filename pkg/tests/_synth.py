"""Synthetic NSL-KDD-format records for end-to-end tests.

Each class draws its 41 features from its own distributions, with deliberate
overlap, so the data is learnable but not trivially separable.  Lines carry
the attack name and a difficulty column, exactly like the real files.
"""
from __future__ import annotations

import numpy as np

SERVICES = ["http", "private", "domain_u", "smtp", "ftp_data", "ecr_i", "other", "eco_i",
            "telnet", "finger", "ftp", "auth", "pop_3", "imap4", "ntp_u"]
FLAGS = ["SF", "S0", "REJ", "RSTR", "RSTO", "SH", "S1"]
PROTOCOLS = ["tcp", "udp", "icmp"]

# class: (share, raw labels, protocol weights, service weights (index: weight), flag weights)
CLASSES = {
    "Normal": (0.53, ["normal"], [0.8, 0.15, 0.05], {0: 6, 2: 3, 3: 2, 4: 2, 6: 1}, {0: 9, 3: 0.3, 2: 0.4}),
    "DoS": (0.36, ["neptune", "smurf", "back", "teardrop", "pod"], [0.6, 0.05, 0.35],
            {1: 6, 5: 4, 0: 1, 6: 1}, {1: 6, 0: 3, 2: 1}),
    "Probing": (0.093, ["satan", "ipsweep", "portsweep", "nmap"], [0.5, 0.15, 0.35],
                {1: 3, 7: 3, 6: 2, 9: 1}, {0: 3, 2: 4, 4: 2}),
    "Privilege": (0.004, ["buffer_overflow", "rootkit", "loadmodule", "perl"], [1.0, 0.0, 0.0],
                  {8: 5, 4: 2, 10: 1}, {0: 9, 4: 1}),
    "AccessControl": (0.013, ["guess_passwd", "warezclient", "ftp_write", "imap"], [0.95, 0.05, 0.0],
                      {4: 4, 10: 3, 8: 3, 13: 1}, {0: 8, 4: 1, 3: 1}),
}

RATE_COLUMNS = list(range(24, 31)) + list(range(33, 41))


def _weights(d, size):
    w = np.full(size, 0.05)
    for k, v in d.items():
        w[k] += v
    return w / w.sum()


def synth_rows(n: int, seed: int = 0, noise: float = 0.02) -> list[list[str]]:
    rng = np.random.default_rng(seed)
    names = list(CLASSES)
    shares = np.array([CLASSES[c][0] for c in names])
    cls = rng.choice(len(names), size=n, p=shares / shares.sum())
    rows = []
    for ci in cls:
        name = names[ci]
        _, labels, proto_w, serv_w, flag_w = CLASSES[name]
        # a few records borrow another class's feature profile
        prof = ci if rng.random() >= noise else rng.integers(len(names))
        _, _, proto_w, serv_w, flag_w = CLASSES[names[prof]]
        x = np.zeros(41)
        cells = [""] * 41
        lvl = prof / 4.0
        x[0] = rng.exponential(1 + 200 * (prof in (3, 4)))
        x[4] = np.round(rng.lognormal(4 + 2 * (prof == 0) - 1.5 * (prof == 1) + lvl, 1.2))
        x[5] = np.round(rng.lognormal(5 * (prof in (0, 4)) + 1, 1.5)) if rng.random() < 0.8 else 0
        x[6] = float(rng.random() < 0.001)
        x[7] = float(rng.random() < 0.02 * (prof == 1))
        x[8] = float(rng.random() < 0.01)
        x[9] = rng.poisson(0.2 + 3 * (prof in (3, 4)))
        x[10] = rng.poisson(0.01 + 1.5 * (prof == 4))
        x[11] = float(rng.random() < (0.7 if prof in (0, 3, 4) else 0.1))
        x[12] = rng.poisson(0.05 + 2 * (prof == 3))
        x[13] = float(rng.random() < 0.6 * (prof == 3))
        x[14] = float(rng.random() < 0.05 * (prof == 3))
        x[15] = rng.poisson(0.1 + 2 * (prof == 3))
        x[16] = rng.poisson(0.05 + 1 * (prof in (3, 4)))
        x[17] = float(rng.random() < 0.3 * (prof == 3))
        x[18] = rng.poisson(0.02 + 0.5 * (prof == 4))
        x[19] = 0.0
        x[20] = 0.0
        x[21] = float(rng.random() < 0.4 * (prof == 4))
        x[22] = min(511, rng.poisson([8, 200, 60, 2, 3][prof]))
        x[23] = min(511, rng.poisson([10, 15, 5, 2, 3][prof]))
        x[31] = min(255, rng.poisson([150, 250, 120, 20, 40][prof]))
        x[32] = min(255, rng.poisson([180, 20, 10, 15, 30][prof]))
        a = [2.0, 8.0, 3.0, 1.5, 1.5][prof]
        b = [12.0, 2.0, 4.0, 8.0, 6.0][prof]
        for j in RATE_COLUMNS:
            shift = (j % 3) * 0.5
            x[j] = np.round(rng.beta(a + shift, b), 2)
        for j in range(41):
            cells[j] = repr(float(x[j])).rstrip("0").rstrip(".") if x[j] != int(x[j]) else str(int(x[j]))
        cells[1] = PROTOCOLS[rng.choice(3, p=np.array(proto_w) / np.sum(proto_w))]
        cells[2] = SERVICES[rng.choice(len(SERVICES), p=_weights(serv_w, len(SERVICES)))]
        cells[3] = FLAGS[rng.choice(len(FLAGS), p=_weights(flag_w, len(FLAGS)))]
        label = labels[rng.integers(len(labels))]
        rows.append(cells + [label, str(int(rng.integers(5, 22)))])
    return rows


def write_synth(path, n: int, seed: int = 0, noise: float = 0.02) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in synth_rows(n, seed, noise):
            fh.write(",".join(row) + "\n")
