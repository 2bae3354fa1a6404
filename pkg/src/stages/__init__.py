# Pipeline stages: vessel perturbation, inpainting, refinement, realism enhancement
