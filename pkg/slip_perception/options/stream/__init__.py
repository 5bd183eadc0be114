from slip_perception.options.stream.scorer import StreamScorer
