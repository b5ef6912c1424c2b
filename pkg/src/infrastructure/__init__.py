"""Infrastructure layer."""