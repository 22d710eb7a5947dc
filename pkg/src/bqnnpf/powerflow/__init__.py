"""Case data, Newton-Raphson power flow and renewable scenario sampling."""

from .case import PRESET_CASES, Branch, Bus, Generator, PowerCase, load_case, parse_case
from .network import AdmittanceMatrix, branch_flows, build_ybus, from_flow_partials
from .scenarios import (
    Dataset,
    Normalization,
    ScenarioConfig,
    add_renewables,
    draw_operating_point,
    fit_norms,
    renewable_sites,
    sample_scenarios,
    split_dataset,
)
from .solver import PFSolution, bus_mismatch, power_injections, solve_nr
