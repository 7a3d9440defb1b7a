"""2-D Wasserstein GAN lab: clipping, gradient and Lipschitz penalties, exact minibatch EMD."""

__version__ = "0.1.0"
