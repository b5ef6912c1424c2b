"""Application layer."""