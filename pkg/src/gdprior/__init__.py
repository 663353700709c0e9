"""Gradient distribution prior (GDP) toolkit.

Learn the distribution of image gradients from a corpus, fit parametric models
to it, and use it as a hard constraint (naturalization by gradient remapping)
or a soft constraint (denoising, blind deconvolution, zooming, dehazing).
"""
from .imagecore import (DimensionError, GradientField, ImageFormatError, gradient, divergence,
                        load_image, save_image)
from .spectrum import GradHist2D, accumulate, distance, marginal
from .models import ModelParams, FitReport, fit, fit_T_closed_form
from .prior import PriorBundle, default_prior, learn_prior, load_prior, naturalness_factor

__version__ = "0.1.0"
