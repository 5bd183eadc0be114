from slip_perception.options.train.trainer import Trainer
