from slip_perception.simulator.dataset import DatasetConfig, generate_dataset, plan_dataset, split_sizes
from slip_perception.simulator.presets import NoiseProfile, ObjectPreset
from slip_perception.simulator.scenario import EpisodeBundle, ScenarioConfig, SimulatorConfig, generate_episode
