# Authentication
