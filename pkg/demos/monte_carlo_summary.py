"""Short Monte Carlo comparison of OLS, IV and CTLS in open and closed loop.

The shipped presets run 100 experiments each; pass a run count to go faster:

    python demos/monte_carlo_summary.py 10
"""

import sys
import tempfile

from vrftctls.campaign import format_table, load_config, run_campaign

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 10

for preset in ("open_loop", "closed_loop"):
    cfg = load_config(preset).with_overrides(runs=runs)
    with tempfile.TemporaryDirectory() as out:
        report = run_campaign(cfg, out)
    print(format_table(report.stats, f"{preset}, {runs} runs, noise variance {cfg.sigma2:g}"))
