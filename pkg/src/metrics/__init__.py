# Restoration quality and change-detection metrics
