from slip_perception.config import PipelineConfig, derive_seed
from slip_perception.pipeline.episode_io import read_manifest
from slip_perception.simulator.dataset import SPLITS, generate_dataset
from slip_perception.utils.io import ensure_writable_dir, sha256_file
from slip_perception.utils.string_tools import print_colored
from slip_perception.utils.timer import Timer


class DatasetGenerator:
    def __init__(self, config: PipelineConfig, out_dir):
        self.config = config
        self.out_dir = ensure_writable_dir(out_dir)

    def generate(self):
        dataset = self.config.dataset
        total = len(dataset.conditions) * len(dataset.objects) * len(dataset.patterns) * dataset.n_per_cell
        print_colored('', '\n\n############# Generating episodes #############', 'blue')
        print_colored('', f'{total} episodes into {self.out_dir}', 'white')
        manifest_path = generate_dataset(
            dataset, self.config.simulator, derive_seed(self.config.seed, 'simulator'), self.out_dir,
            workers=self.config.workers,
        )
        counts = read_manifest(manifest_path)['split'].value_counts()
        summary = ', '.join(f'{split}: {int(counts.get(split, 0))}' for split in SPLITS)
        print_colored(
            'Dataset written',
            f'{summary}\nmanifest: {manifest_path}\nsha256: {sha256_file(manifest_path)}\n'
            f'time: {Timer().get_time_since_start()}',
            'green',
        )
        return manifest_path
