#pragma once

#include "cdvft/chain.hpp"
#include "cdvft/checkpoint.hpp"
#include "cdvft/complexity.hpp"
#include "cdvft/config.hpp"
#include "cdvft/error.hpp"
#include "cdvft/factors.hpp"
#include "cdvft/fft.hpp"
#include "cdvft/gradcheck.hpp"
#include "cdvft/op_counts.hpp"
#include "cdvft/trainer.hpp"
#include "cdvft/types.hpp"
