#pragma once

#include "s3tts/numerics/attention.hpp"
#include "s3tts/numerics/autograd.hpp"
#include "s3tts/numerics/conv_ops.hpp"
#include "s3tts/numerics/gradcheck.hpp"
#include "s3tts/numerics/ops.hpp"
#include "s3tts/numerics/optim.hpp"
#include "s3tts/numerics/params.hpp"
#include "s3tts/numerics/signal.hpp"
#include "s3tts/numerics/tensor.hpp"
