# LMRN - long memory recurrent networks
