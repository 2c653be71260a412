#include <stdio.h>
#include "bitree_embed.h"

int main(void) {
    BeInstance *inst = NULL;
    if (be_instance_random(2, 2, 7, BE_DISTRIBUTION_BOUNDARY, &inst) != BE_STATUS_OK) {
        fprintf(stderr, "%s\n", be_last_error());
        return 1;
    }
    BeChain chain;
    BeStatus s = be_verify_chain(inst, &chain);
    be_instance_free(inst);
    if (s != BE_STATUS_OK) {
        return 1;
    }
    printf("%.17g %.17g\n", chain.box_value, chain.embedding);
    return chain.box_value <= chain.embedding ? 0 : 2;
}
