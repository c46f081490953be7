# Models package: numpy layers, predictor families and training
