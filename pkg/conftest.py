import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Spectral_Lab.settings')
django.setup()
