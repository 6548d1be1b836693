"""Generative Neurosymbolic Machines: structured scene generation with a global latent prior."""
