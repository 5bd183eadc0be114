from slip_perception.options.evaluate.ablation import Ablation
from slip_perception.options.evaluate.evaluator import Evaluator
