"""
Driving the tool from the command line
======================================

The installed `bvcontrol` entry point covers solve, verify, soc, and
sweep. This script writes a config file, runs the four verbs through
the same main() the console script uses, and shows what lands in the
output directory. Everything is plain text: INI config in, CSV/JSON
artifacts out, so runs diff cleanly and rerun bit-identical.
"""

import json
import os
import tempfile

from bvcontrol.cli import main

CONFIG = """
; two-lobe tracking problem, small grid so the demo runs in seconds
[grid]
nx = 16
ny = 16

[problem]
alpha = 1e-3
gamma = 1e-4

[schedule]
burnin = 8
stages = 4
grad_tol = 1e-8
max_inner = 400

[sweep]
alphas = 8e-4, 1e-3, 2e-3
"""


def run(argv):
    print(f"$ bvcontrol {' '.join(argv)}")
    code = main(argv)
    print(f"  -> exit {code}")
    return code


def main_demo():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "run.ini")
        with open(cfg, "w") as fh:
            fh.write(CONFIG)

        out = os.path.join(tmp, "out")
        run(["solve", "--config", cfg, "--out", out, "--seed", "1", "--quiet"])
        print("  artifacts:", ", ".join(sorted(os.listdir(out))))
        with open(os.path.join(out, "report.json")) as fh:
            rep = json.load(fh)
        print(f"  J = {rep['J']:.8e}, TV = {rep['TV']:.6f}, "
              f"converged = {rep['converged']}")

        run(["verify", "--config", cfg, "--out", out, "--seed", "1", "--quiet"])
        with open(os.path.join(out, "certificate.json")) as fh:
            cert = json.load(fh)
        print(f"  residual_rel = {cert['residual_rel']:.3e}, "
              f"saturation = {cert['saturation_fraction']:.3f}")

        run(["soc", "--config", cfg, "--out", out, "--seed", "1", "--quiet"])
        with open(os.path.join(out, "soc.json")) as fh:
            soc = json.load(fh)
        print(f"  delta_control = {soc['delta_control']:.3e}, "
              f"growth_all_ok = {soc['growth_all_ok']}")

        run(["sweep", "--config", cfg, "--out", out, "--seed", "1", "--quiet"])
        with open(os.path.join(out, "sweep.csv")) as fh:
            for line in fh.read().strip().splitlines():
                print("  " + line)


if __name__ == "__main__":
    main_demo()
