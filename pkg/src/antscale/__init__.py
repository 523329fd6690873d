"""Trade-off aware autoscaling decisions for cloud services.

The package pairs a pheromone-based multi-objective optimizer and a
compromise-oriented selector with rule, hill-climbing, random-search and
genetic baselines, all driven against a discrete-interval QoS simulator and
scored by comparison metrics. The ``antscale`` command runs full experiments.
"""

__version__ = "0.1.0"
