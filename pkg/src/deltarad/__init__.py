"""Delta-radiomics pipeline for predicting subsequent irradiation of brain metastases."""

__version__ = "0.1.0"
