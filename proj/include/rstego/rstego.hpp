#pragma once

#include "rstego/attacks.hpp"
#include "rstego/channel.hpp"
#include "rstego/codec.hpp"
#include "rstego/cost.hpp"
#include "rstego/crypto.hpp"
#include "rstego/ecc.hpp"
#include "rstego/embed_scheme.hpp"
#include "rstego/embedding.hpp"
#include "rstego/experiments.hpp"
#include "rstego/langmodel.hpp"
#include "rstego/lsh.hpp"
#include "rstego/prf.hpp"
#include "rstego/profile.hpp"
#include "rstego/remote.hpp"
#include "rstego/stats.hpp"
#include "rstego/util.hpp"
#include "rstego/watermark.hpp"
