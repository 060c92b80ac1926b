from .config import ScenarioConfig
from .network import Topology, TopologyBuilder
from .harness import run_monte_carlo, run_scenario
