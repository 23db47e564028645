#pragma once

#include "cmrlab/autodiff.hpp"
#include "cmrlab/cmcn.hpp"
#include "cmrlab/codec.hpp"
#include "cmrlab/error.hpp"
#include "cmrlab/fft.hpp"
#include "cmrlab/gradcheck.hpp"
#include "cmrlab/gradcheck_suite.hpp"
#include "cmrlab/image.hpp"
#include "cmrlab/io.hpp"
#include "cmrlab/kspace.hpp"
#include "cmrlab/manifest.hpp"
#include "cmrlab/metrics.hpp"
#include "cmrlab/optim.hpp"
#include "cmrlab/parallel.hpp"
#include "cmrlab/phantom.hpp"
#include "cmrlab/psf.hpp"
#include "cmrlab/report.hpp"
#include "cmrlab/richardson_lucy.hpp"
#include "cmrlab/synthblur.hpp"
#include "cmrlab/tensor.hpp"
#include "cmrlab/train.hpp"
