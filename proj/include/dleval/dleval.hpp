#pragma once

#include "dleval/error.hpp"
#include "dleval/kb.hpp"
#include "dleval/kb_text.hpp"
#include "dleval/parallel.hpp"
#include "dleval/dl_ops.hpp"
#include "dleval/hypothesis.hpp"
#include "dleval/device.hpp"
#include "dleval/synth.hpp"
