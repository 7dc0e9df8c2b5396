"""Manifold learning, tensor methods and metric learning for hyperspectral imagery.

Modules
-------
linalg        symmetric eigensolver, Cholesky, generalized eigenproblem, PSD projection
tensor        unfold/fold, mode products, rank-1 tensor decomposition denoising
patch_align   patch alignment: PCA/LDA/LE/LLE/DLA builders and linear embeddings
multi_feature MFC and MSNE multi-feature reduction with learned feature weights
tdla          tensor discriminative locality alignment on spectral-spatial tensors
detection     supervised metric learning for target detection, ROC/AUC
stm           Gabor texture, multifeature tensors and the support tensor machine
pipeline      ENVI I/O, synthetic scenes, kNN/evaluation and the command line
"""

__version__ = "0.1.0"
