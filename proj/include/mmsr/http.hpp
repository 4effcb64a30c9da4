#pragma once

// httplib drags in <resolv.h>, whose `_res` macro clobbers parameter names in
// Eigen's product kernels. Parse Eigen first.

#include <Eigen/Dense>

// The stock backlog of 5 drops connects when a burst of clients arrives at once.
#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#endif
#include <httplib.h>
