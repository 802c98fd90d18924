# Augmentation
