"""Model factory implementation for the link-prediction and credit-scoring zoo."""
import logging

from config.schemas import ModelConfig, Variant
from models.base import BaseModel
from models.gcn import GcnCreditModel
from models.rnn_link import RnnLinkModel
from models.seal import SealLinkModel


class ModelFactory:
    """Factory class for creating model instances.

    Every variant of :class:`Variant` maps to one model class; variants that
    share a class differ only in readout or edge weighting.
    """

    @staticmethod
    def create(cfg: ModelConfig, input_dim: int) -> BaseModel:
        """
        Create and return a freshly initialized model for ``cfg.variant``.

        Args:
            cfg: Model configuration (variant, widths, seed)
            input_dim: Width of one input row (sequence features for RNN_LINK,
                node features otherwise)

        Returns:
            Model initialized from ``cfg.seed``

        Raises:
            ValueError: If the input width is not positive
        """
        logger = logging.getLogger(__name__)
        if input_dim <= 0:
            raise ValueError(f"Input width must be positive, got {input_dim}")

        variant = cfg.variant
        logger.info(f"Creating {variant.value} model (input width: {input_dim})")

        if variant is Variant.RNN_LINK:
            return RnnLinkModel(cfg, input_dim)
        if variant.is_subgraph_link_model:
            return SealLinkModel(cfg, input_dim)
        return GcnCreditModel(cfg, input_dim)
