"""Domain layer."""