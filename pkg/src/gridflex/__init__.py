"""Robust frequency-reserve scheduling for commercial building aggregations.

Core layers:

- :mod:`gridflex.thermal`      building models and horizon stacking
- :mod:`gridflex.uncertainty`  admissible-signal sets and worst-case oracles
- :mod:`gridflex.lp`           bundled dense LP solver
- :mod:`gridflex.scheduling`   daily robust reserve scheduling
- :mod:`gridflex.mpc`          half-hourly robust baseline control
- :mod:`gridflex.dispatch`     signal filtering, bias estimation, dispatch
- :mod:`gridflex.harness`      closed-loop scenario runs, sweeps, reports
- :mod:`gridflex.service`      FastAPI wrapper around the harness
"""

__version__ = "0.1.0"
