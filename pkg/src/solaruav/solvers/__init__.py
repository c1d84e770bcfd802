from .greedy import GreedyPolicy, greedy_baseline
from .oracles import dp_oracle, exhaustive_oracle
from .relax import relax_and_discretize

__all__ = ["GreedyPolicy", "greedy_baseline", "dp_oracle", "exhaustive_oracle", "relax_and_discretize"]
