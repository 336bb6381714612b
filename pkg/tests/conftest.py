import torch

# Single-threaded torch keeps every numeric result reproducible run to run.
torch.set_num_threads(1)
