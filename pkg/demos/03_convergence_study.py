"""Run a small convergence study through the harness and print the
experimental orders, then point the plotting frontend at the CSV:

    node frontend/dist/cli.js plot --csv demo_out/demo_convergence.csv \
        --x H --out demo_out
"""

from pathlib import Path

from wavelod.experiments import parse_config, run_convergence_study

config_text = """
[study]
kind = convergence
[mesh]
h_exp = 6
eps_exp = 4
H_exps = 1 2 3
[coefficient]
kind = checkerboard
seed = 1234
lo = 1.0
hi = 10.0
[discretization]
p_list = 0 1
ell_rule = fixed
ell_list = 2 4 7
[time]
theta = 1/4
tau = 2^-7
t_end = 1.0
[problem]
name = driven_sine
[output]
prefix = demo
"""

out = Path("demo_out")
out.mkdir(exist_ok=True)
cfg_path = out / "demo.cfg"
cfg_path.write_text(config_text)

rows, csv_path = run_convergence_study(parse_config(cfg_path), out,
                                       cache_dir=out / "cache")
print(f"wrote {csv_path}\n")
print(f"{'p':>2} {'H':>8} {'ell':>4} {'a_err_rel':>12} {'eoc_a':>7}")
for r in rows:
    eoc = f"{r['eoc_a']:.2f}" if r["eoc_a"] != "" else "-"
    print(f"{r['p']:>2} {r['H']:>8} {r['ell']:>4} {r['a_err_rel']:>12.3e} {eoc:>7}")
