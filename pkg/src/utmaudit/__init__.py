"""Security audit toolkit for federated UTM deployments.

Probes network segmentation, TLS/mTLS posture, OAuth 2.0 authorization,
JWT handling, injection resistance, and log-policy integrity against a
declarative target manifest. Ships a self-contained mock deployment
(`utmaudit.testbed`) with per-check vulnerability toggles that serves as
ground truth for every check.
"""

__version__ = "0.1.0"
