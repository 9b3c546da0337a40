"""File formats, manifests, fixtures and the batch driver."""
