"""Pre-event SAR synthesis and change-detection dataset toolkit for oil-spill monitoring."""
