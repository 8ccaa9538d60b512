"""Energy-optimal gear selection for two-speed electric vehicles.

Modules: ``vehicle`` (powertrain model), ``cycle`` (driving cycles and
horizon windows), ``ocp`` (convexified gearshift problem and exact solver),
``nn`` (soft-argmax MLP optimizer), ``mpc`` (closed-loop simulation) and
``cli``.
"""

__version__ = "0.1.0"
