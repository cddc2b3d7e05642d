import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'happy-dom',
    environmentOptions: {
      happyDOM: {
        // the session test talks to a real service subprocess on 127.0.0.1,
        // which a no-origin test page would otherwise be forbidden to reach
        settings: { fetch: { disableSameOriginPolicy: true } },
      },
    },
    // the session test boots the real annotation service as a subprocess
    testTimeout: 30000,
    hookTimeout: 30000,
  },
});
