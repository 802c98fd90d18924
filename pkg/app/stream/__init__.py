# Stream generation
