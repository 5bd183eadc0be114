from slip_perception.options.generate.generator import DatasetGenerator
